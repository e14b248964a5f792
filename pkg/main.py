from fdiflow import (AttackProblemSpec, BoundsReport, algorithm1, algorithm2,
                     algorithm3, baseline_dcopf, build_injection_model,
                     build_subgraph, critical_lines, load_case, plot_bounds,
                     verify_attack)

case = load_case("tests/__statics/case24_ieee_rts.m")
case.get_info()

model = build_injection_model(case)
baseline = baseline_dcopf(case, model)
baseline.get_info()

target = critical_lines(case, baseline)[0]
report = BoundsReport(case.get_name(), [bus.id for bus in case.get_buses()])

for n1 in [0.1, 0.2, 0.3, 0.4, 0.5]:
    spec = AttackProblemSpec(target_line=target, n1=n1, load_shift=0.1)
    for method in (algorithm1, algorithm2, algorithm3):
        report.add(method(case, model, spec, baseline))

report.get_info()
report.to_csv("report.csv")
plot_bounds(report, target, "bounds.png")

worst = report.get(target, 0.5, "A1")
verification = verify_attack(case, model, AttackProblemSpec(target, 0.5), worst.c)
print(f"Line {target} carries {verification.overflow_ratio:.2%} of its rating.")

if worst.c.l0() > 0:
    graph = build_subgraph(worst.c, case).get_graph(case)
    graph.view()
