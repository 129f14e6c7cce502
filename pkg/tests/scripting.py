"""Builders for scripted-backend reply lists."""

from foodplan.prompts import ProposedSequence, SkillLabels, render_response
from foodplan.scenarios import plan_from_state
from foodplan.world import DONE, Skill, SkillKind, is_reachable, move_to, run_skills


def reply(labels, start, skills, description="scripted"):
    return render_response(ProposedSequence(description, tuple((start + i, s) for i, s in enumerate(skills))), labels)


def suffix_replies(labels, plan, start=1):
    """One reply per iteration, each continuing ``plan`` from that iteration."""
    return [reply(labels, start + k, plan[k:]) for k in range(len(plan))]


def far_source(scenario):
    for t in scenario.goal.transfers:
        if not is_reachable(scenario.initial_state.bowl(t.source).position):
            return scenario.initial_state.bowl(t.source)
    raise ValueError(f"{scenario.id} has no far source")


def far_scoop_script(scenario):
    """Grab the spoon and scoop straight from the far bowl, then follow the recovery.

    The third reply proposes the far scoop; the rest continue the oracle plan
    from the state after the first two steps.
    """
    labels = SkillLabels(scenario.skills)
    far = far_source(scenario)
    naive = [Skill(SkillKind.GRASP_SPOON), move_to(far.color), Skill(SkillKind.SCOOP)]
    dest = scenario.initial_state.bowl(scenario.goal.transfers[0].destination)
    naive += [move_to(dest.color), Skill(SkillKind.DROP_FOOD), DONE]
    replies = suffix_replies(labels, naive)[:3]
    state, _ = run_skills(scenario.initial_state, naive[:2])
    replies += suffix_replies(labels, plan_from_state(scenario, state), start=3)
    return replies
