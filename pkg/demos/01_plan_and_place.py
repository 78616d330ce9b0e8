"""Plan a bundled application and show where every instance lands.

Loads the social-media app (image classify -> caption), synthesizes a latency
profile from its bundled generator knobs, asks the planner for the best
configuration at 600 req/s under a 28-slice budget, and prints the chosen
instances, the constraint margins, and an ASCII map of the packed GPUs.

Run:  python3 demos/01_plan_and_place.py
"""

from importlib import resources

from sliceserve import (
    PlanRequest,
    SearchSpace,
    instance_segments,
    load_app,
    load_knobs,
    min_gpus,
    pack,
    plan,
    render_plan,
    synth_profile,
)

APPS = resources.files("sliceserve").joinpath("apps")

app = load_app(str(APPS.joinpath("social-media.json")))
knobs = load_knobs(str(APPS.joinpath("social-media.knobs.json")))
profile = synth_profile(app.graph, knobs)

demand = 600.0
result = plan(app, profile, PlanRequest(demand, 28, SearchSpace(True, True, True)))
if not result.feasible:
    raise SystemExit(f"no feasible configuration: {result.binding_constraint}")

config = result.config
print(f"app: {app.name}   demand: {demand:g} req/s   slice budget: 28")
print(f"objective: {result.objective:.4f}   normalized accuracy: {config.a_obj:.4f}")
print(f"slices used: {config.total_slices}\n")

print("chosen instances")
for (task, variant_id, segment, batch), count in config.m:
    latency = config.latency_ms[task]
    print(
        f"  {task:<10} {count} x {variant_id:<12} on {segment} "
        f"batch {batch:<3} (task latency {latency:.1f} ms)"
    )

print("\nconstraint margins (negative would mean violated)")
for verdict in result.verdicts:
    subject = f" [{verdict.subject}]" if verdict.subject else ""
    print(f"  {verdict.name:<11}{subject}: {verdict.margin:+.3f}")

segments = instance_segments(config)
gpus = min_gpus(segments)
deployment = pack(segments, gpus)
print(f"\npacked onto {gpus} GPU(s); one row per GPU, one char per slice:")
print(render_plan(deployment))
