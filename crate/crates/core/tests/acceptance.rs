//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use d2d_core::alloc::{exact_allocate, greedy_allocate};
use d2d_core::harness::{
    emit_plot_data, generate_instance, results_csv, run_scenario, InstanceSpec, Method, ResultRow, Scenario,
    ScenarioConfig, Shape,
};
use d2d_core::mimo::{
    beamformer_objective, link_mse, mmse_combiner, solve_beamformers, update_weight, wmmse_optimize, WmmseConfig,
};
use d2d_core::model::{
    self, local_baseline, total_energy, Allocation, BeamformingState, CMatrix, CVector, ChannelSet, Link,
    NetworkInstance, NodeProfile, MBIT,
};
use d2d_core::optimizer::{alternate, initialize, unit_sphere, Report, RunConfig};
use d2d_core::oracle::brute_force_allocation;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn spec(nodes: usize, antennas: usize, subchannels: usize, power_budget: f64) -> InstanceSpec {
    let cfg = ScenarioConfig {
        power_budget,
        ..ScenarioConfig::default()
    };
    InstanceSpec::from_config(
        &cfg,
        Shape {
            nodes,
            antennas,
            subchannels,
        },
    )
}

fn worked_example() -> (NetworkInstance, ChannelSet, BeamformingState) {
    let nodes = [10.0, 2.0, 1.0]
        .iter()
        .map(|c| NodeProfile::with_antennas(10.0 * MBIT, c * MBIT, 1.0, 1))
        .collect();
    let net = NetworkInstance::new(nodes, 1.0, 1e6, 1.0, 1).unwrap();
    // |h|^2 = 3 gives log2(1 + 3) = 2 bits/s/Hz, so 2 Mbit/s at 1 W.
    let ch = ChannelSet::from_fn(&net, |_, _| CMatrix::from_element(1, 1, Complex64::from(3f64.sqrt()))).unwrap();
    let one = CVector::from_element(1, Complex64::from(1.0));
    let bf = BeamformingState {
        beamformers: vec![Some(one.clone()); 3],
        combiners: vec![Some(one); 3],
    };
    (net, ch, bf)
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let (net, ch, bf) = worked_example();
    let local = local_baseline(&net).total;
    let at_2mbps = |tx, rx| {
        let a = Allocation::new(vec![Link::new(tx, rx, 0)]);
        total_energy(&net, &a, &[2e6], &[1.0]).unwrap().total
    };
    let three_to_one = at_2mbps(2, 0);
    let two_to_one = at_2mbps(1, 0);
    let evaluated = model::evaluate(&net, &Allocation::new(vec![Link::new(2, 0, 0)]), &bf, &ch).unwrap().total;
    let exact = exact_allocate(&net, &bf, &ch).unwrap();
    let greedy = greedy_allocate(&net, &bf, &ch).unwrap();
    let target = [Link::new(2, 0, 0)];
    let elapsed = started.elapsed();
    let pass = (local - 16.0).abs() <= 1e-9
        && (three_to_one - 12.0).abs() <= 1e-9
        && (two_to_one - 17.0).abs() <= 1e-9
        && (evaluated - 12.0).abs() <= 1e-9
        && exact.allocation.links() == target
        && greedy.allocation.links() == target
        && elapsed < Duration::from_secs(1);
    verdict(
        pass,
        format!(
            "local={local} J, (3,1)={three_to_one} J, (2,1)={two_to_one} J, exact={:?}, greedy={:?}, {elapsed:?}",
            exact.allocation.links(),
            greedy.allocation.links()
        ),
    )
}

/// The 100 small instances shared by criteria 2 and 3, with the random
/// signals the allocators are compared under.
fn small_instances() -> Vec<(NetworkInstance, ChannelSet, BeamformingState)> {
    (0..100u64)
        .map(|i| {
            let k = 2 + (i % 4) as usize;
            let s = 1 + ((i / 4) % 2) as usize;
            let n = 1 + ((i / 8) % 2) as usize;
            let (net, ch) = generate_instance(&spec(k, n, s, 5.0), 1000 + i).unwrap();
            let (_, bf) = initialize(&net, 2000 + i);
            (net, ch, bf)
        })
        .collect()
}

fn criterion_2(instances: &[(NetworkInstance, ChannelSet, BeamformingState)]) -> Verdict {
    let started = Instant::now();
    let mut mismatches = 0;
    let mut nontrivial = 0;
    for (net, ch, bf) in instances {
        let exact = exact_allocate(net, bf, ch).unwrap();
        let reference = brute_force_allocation(net, bf, ch, net.max_links());
        if !reference.allocation.is_empty() {
            nontrivial += 1;
        }
        if exact.allocation != reference.allocation || rel(exact.energy.total, reference.energy.total) > 1e-12 {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    verdict(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!("{mismatches} mismatches over 100 instances ({nontrivial} with links), {elapsed:?}"),
    )
}

fn criterion_3(instances: &[(NetworkInstance, ChannelSet, BeamformingState)]) -> Verdict {
    let mut violations = 0;
    let mut gaps = Vec::new();
    for (net, ch, bf) in instances {
        let exact = exact_allocate(net, bf, ch).unwrap().energy.total;
        let greedy = greedy_allocate(net, bf, ch).unwrap().energy.total;
        let local = local_baseline(net).total;
        if !(exact <= greedy * (1.0 + 1e-12) && greedy <= local * (1.0 + 1e-12)) {
            violations += 1;
        }
        gaps.push((greedy - exact) / exact);
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    verdict(
        violations == 0,
        format!("{violations} ordering violations; greedy-exact gap mean {:.3}% max {:.3}%", 100.0 * mean_gap, 100.0 * max_gap),
    )
}

fn random_combiner_trials(net: &NetworkInstance, ch: &ChannelSet, alloc: &Allocation, g: &[CVector], rng: &mut ChaCha8Rng) -> usize {
    let mut losses = 0;
    for (n, l) in alloc.links().iter().enumerate() {
        let best = link_mse(n, &mmse_combiner(n, g, alloc, ch, net.noise_power), g, alloc, ch, net.noise_power);
        for _ in 0..200 {
            let z = unit_sphere(rng, net.nodes[l.rx].rx_antennas);
            if link_mse(n, &z, g, alloc, ch, net.noise_power) < best {
                losses += 1;
            }
        }
    }
    losses
}

fn kkt_residual(net: &NetworkInstance, ch: &ChannelSet, alloc: &Allocation, rng: &mut ChaCha8Rng) -> f64 {
    let links = alloc.links();
    let z: Vec<CVector> = links.iter().map(|l| unit_sphere(rng, net.nodes[l.rx].rx_antennas)).collect();
    let w: Vec<f64> = links.iter().map(|_| update_weight(rng.random_range(0.05..0.95), &WmmseConfig::default())).collect();
    let data: Vec<f64> = links.iter().map(|l| net.nodes[l.tx].data_length).collect();
    let sol = solve_beamformers(&z, &w, &data, alloc, ch, net, 1e-12);
    let g = sol.beamformers;
    let f = |g: &[CVector]| beamformer_objective(g, &z, &w, &data, alloc, ch);
    let scale: f64 = g.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-3);
    let h = 1e-4 * scale;
    // Central differences in the real and imaginary part of every entry;
    // exact up to rounding since the objective is quadratic.
    let gradient = |at: &[CVector]| -> Vec<Vec<Complex64>> {
        (0..at.len())
            .map(|n| {
                (0..at[n].len())
                    .map(|i| {
                        let mut partial = [0.0; 2];
                        for (part, dir) in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)].into_iter().enumerate() {
                            let mut plus = at.to_vec();
                            let mut minus = at.to_vec();
                            plus[n][i] += dir * h;
                            minus[n][i] -= dir * h;
                            partial[part] = (f(&plus) - f(&minus)) / (2.0 * h);
                        }
                        Complex64::new(partial[0], partial[1])
                    })
                    .collect()
            })
            .collect()
    };
    let zero: Vec<CVector> = g.iter().map(|v| CVector::zeros(v.len())).collect();
    let at_solution = gradient(&g);
    let at_zero = gradient(&zero);
    let mut residual = 0.0;
    let mut reference = 0.0;
    for n in 0..g.len() {
        for i in 0..g[n].len() {
            // Real-coordinate gradient of the Lagrangian: grad f + 2 mu g.
            residual += (at_solution[n][i] + g[n][i] * (2.0 * sol.multiplier)).norm_sqr();
            reference += at_zero[n][i].norm_sqr();
        }
    }
    let power: f64 = g.iter().map(|v| v.norm_squared()).sum();
    let slackness = sol.multiplier * (power - net.power_budget);
    let r = (residual / reference.max(f64::MIN_POSITIVE)).sqrt();
    if slackness.abs() > 1e-6 * sol.multiplier.max(1.0) * net.power_budget || power > net.power_budget + 1e-9 {
        return f64::INFINITY;
    }
    r
}

fn criterion_4() -> Verdict {
    let cfg = WmmseConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut surrogate_failures = 0;
    let mut worst_rise: f64 = 0.0;
    let mut mmse_losses = 0;
    let mut worst_kkt: f64 = 0.0;
    let mut runs = 0;
    let mut seed = 0u64;
    while runs < 50 {
        seed += 1;
        let (net, ch) = generate_instance(&spec(6, 3, 2, 5.0), 4000 + seed).unwrap();
        let (alloc, init) = initialize(&net, 5000 + seed);
        if alloc.is_empty() {
            continue;
        }
        runs += 1;
        let out = wmmse_optimize(&alloc, &ch, &net, &cfg, &init);
        let trace = &out.surrogate_trace;
        let mut failed = false;
        for pair in trace.windows(2) {
            let rise = (pair[1] - pair[0]) / pair[0].abs().max(1.0);
            worst_rise = worst_rise.max(rise);
            failed |= rise > 1e-9;
        }
        surrogate_failures += failed as usize;
        mmse_losses += random_combiner_trials(&net, &ch, &alloc, &out.iterate.beamformers, &mut rng);
        worst_kkt = worst_kkt.max(kkt_residual(&net, &ch, &alloc, &mut rng));
    }

    // Single link: capacity of the dominant eigenmode at full power.
    let mut worst_capacity: f64 = 0.0;
    for seed in 0..20u64 {
        let n = 1 + (seed % 4) as usize;
        let (net, ch) = generate_instance(&spec(2, n, 1, 5.0), 6000 + seed).unwrap();
        let alloc = Allocation::new(vec![Link::new(0, 1, 0)]);
        let out = wmmse_optimize(&alloc, &ch, &net, &cfg, &BeamformingState::empty(2));
        let rate = model::link_rate(0, &alloc, &out.state, &ch, &net).unwrap();
        let sigma = ch.get(0, 1).singular_values()[0];
        let capacity = net.bandwidth * (1.0 + net.power_budget * sigma * sigma / net.noise_power).log2();
        worst_capacity = worst_capacity.max(rel(rate, capacity));
    }

    let a = surrogate_failures == 0;
    let b = mmse_losses == 0;
    let c = worst_kkt <= 1e-6;
    let d = worst_capacity <= 1e-6;
    verdict(
        a && b && c && d,
        format!(
            "(a) {surrogate_failures}/50 runs with a surrogate increase, worst relative step {worst_rise:.3e}: {}; \
             (b) {mmse_losses} random combiners beat MMSE: {}; (c) worst KKT residual {worst_kkt:.3e}: {}; \
             (d) worst single-link capacity error {worst_capacity:.3e}: {}",
            pf(a),
            pf(b),
            pf(c),
            pf(d)
        ),
    )
}

fn pf(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}

fn scenario(
    scenario: Scenario,
    nodes: usize,
    antennas: usize,
    subchannels: usize,
    power_budget: f64,
    methods: Vec<Method>,
    seeds: u64,
) -> ScenarioConfig {
    ScenarioConfig {
        scenario,
        nodes,
        antennas,
        subchannels,
        power_budget,
        methods,
        seeds: (0..seeds).collect(),
        ..ScenarioConfig::default()
    }
}

fn mean_of(rows: &[ResultRow], method: &str, value: usize) -> f64 {
    let agg = emit_plot_data(rows);
    agg.iter()
        .find(|a| a.method == method && a.sweep_value == value)
        .map_or(f64::NAN, |a| a.mean_total)
}

fn failed_rows(rows: &[ResultRow]) -> usize {
    rows.iter().filter(|r| !r.is_ok()).count()
}

fn criterion_5() -> Verdict {
    let started = Instant::now();
    let cfg = scenario(Scenario::Single, 10, 6, 3, 5.0, vec![Method::Greedy, Method::Local], 50);
    let rows = run_scenario(&cfg).unwrap();
    let greedy = mean_of(&rows, "greedy", 0);
    let local = mean_of(&rows, "local", 0);
    let reduction = 1.0 - greedy / local;
    let elapsed = started.elapsed();
    verdict(
        reduction >= 0.05 && failed_rows(&rows) == 0 && elapsed < Duration::from_secs(300),
        format!("mean greedy {greedy:.3} J vs local {local:.3} J, reduction {:.2}%, {elapsed:?}", 100.0 * reduction),
    )
}

fn criterion_6() -> Verdict {
    let mut first_largest = 0;
    let mut below_local = 0;
    let mut runs = 0;
    for (i, antennas) in [5usize, 15].into_iter().enumerate() {
        for seed in 0..25u64 {
            let (net, ch) = generate_instance(&spec(6, antennas, 3, 5.0), 7000 + 100 * i as u64 + seed).unwrap();
            let cfg = RunConfig {
                rng_seed: seed,
                ..RunConfig::default()
            };
            let out = alternate(&net, &ch, &cfg).unwrap();
            let t: Vec<f64> = out.best.trajectory.iter().map(|r| r.energy.total).collect();
            runs += 1;
            let drops: Vec<f64> = t.windows(2).map(|w| w[0] - w[1]).collect();
            if drops.is_empty() || drops.iter().all(|&d| drops[0] >= d) {
                first_largest += 1;
            }
            if out.best.energy.total <= local_baseline(&net).total {
                below_local += 1;
            }
        }
    }
    let share = first_largest as f64 / runs as f64;
    verdict(
        share >= 0.8 && below_local == runs,
        format!(
            "largest drop at the first alternation in {first_largest}/{runs} runs; final at or below local in {below_local}/{runs}"
        ),
    )
}

fn criterion_7() -> Verdict {
    let mut cfg = scenario(
        Scenario::SubchannelsSweep,
        10,
        7,
        1,
        5.0,
        vec![Method::Greedy, Method::Random],
        50,
    );
    cfg.sweep_values = Some(vec![1, 2, 3]);
    let rows = run_scenario(&cfg).unwrap();
    let greedy: Vec<f64> = (1..=3).map(|s| mean_of(&rows, "greedy", s)).collect();
    let random: Vec<f64> = (1..=3).map(|s| mean_of(&rows, "random", s)).collect();
    let trend = greedy.windows(2).all(|w| w[1] <= w[0] * 1.02);
    let dominance = greedy.iter().zip(&random).all(|(g, r)| g <= r);
    verdict(
        trend && dominance && failed_rows(&rows) == 0,
        format!("greedy means {greedy:.3?}, random means {random:.3?}"),
    )
}

fn criterion_8() -> Verdict {
    let mut cfg = scenario(
        Scenario::NodesSweep,
        4,
        10,
        2,
        10.0,
        vec![Method::Greedy, Method::Random],
        50,
    );
    cfg.sweep_values = Some(vec![4, 12]);
    let rows = run_scenario(&cfg).unwrap();
    let gap = |k| mean_of(&rows, "random", k) - mean_of(&rows, "greedy", k);
    let (gap4, gap12) = (gap(4), gap(12));

    let mut small = scenario(
        Scenario::NodesSweep,
        4,
        10,
        2,
        10.0,
        vec![Method::Exact, Method::Greedy],
        50,
    );
    small.sweep_values = Some(vec![4, 6, 8]);
    let small_rows = run_scenario(&small).unwrap();
    let mut worst: f64 = 0.0;
    for k in [4, 6, 8] {
        worst = worst.max(rel(mean_of(&small_rows, "greedy", k), mean_of(&small_rows, "exact", k)));
    }
    verdict(
        gap12 > gap4 && worst <= 0.05 && failed_rows(&rows) + failed_rows(&small_rows) == 0,
        format!(
            "random-greedy gap {gap4:.3} J at K=4, {gap12:.3} J at K=12; worst exact/greedy mean difference {:.3}% for K<=8",
            100.0 * worst
        ),
    )
}

fn criterion_9() -> Verdict {
    let mut identical = true;
    for s in [Scenario::LinksSweep, Scenario::Iterations, Scenario::NodesSweep] {
        let mut cfg = scenario(s, 6, 3, 2, 5.0, vec![Method::Exact, Method::Greedy, Method::Random, Method::Local], 3);
        cfg.restarts = 3;
        cfg.report = Report::Best;
        if s == Scenario::NodesSweep {
            cfg.sweep_values = Some(vec![4, 6]);
        }
        let a = results_csv(&cfg, &run_scenario(&cfg).unwrap());
        let b = results_csv(&cfg, &run_scenario(&cfg).unwrap());
        identical &= a == b;
    }
    verdict(identical, "links_sweep, iterations and nodes_sweep reruns compared byte for byte")
}

fn main() {
    let instances = small_instances();
    let checks: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("1 worked-example oracle", Box::new(criterion_1)),
        ("2 exact solver equals exhaustive enumeration", Box::new(|| criterion_2(&instances))),
        ("3 exact <= greedy <= local", Box::new(|| criterion_3(&instances))),
        ("4 WMMSE correctness", Box::new(criterion_4)),
        ("5 energy reduction over local processing", Box::new(criterion_5)),
        ("6 first-alternation drop", Box::new(criterion_6)),
        ("7 subchannel trend", Box::new(criterion_7)),
        ("8 node-scaling trend", Box::new(criterion_8)),
        ("9 deterministic CSV", Box::new(criterion_9)),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        let v = check();
        if !v.pass {
            failures += 1;
        }
        println!("criterion {name}: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
