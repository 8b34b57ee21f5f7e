//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Reference values come from formulas and brute-force searches written out here, not from
//! the library's own routines.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revealmm::desiderata::{check_desiderata, CheckOptions, Desideratum};
use revealmm::gradual::{GradualMarket, Schedule};
use revealmm::lcmm::{certificate_check, lcmm_cost, LcmmModel};
use revealmm::market::{Observation, OutcomeSpace};
use revealmm::scenario::{self, Format, RunFlags, Scenario};
use revealmm::sim::{run_protocol1, run_protocol2, verify_loss, wc_loss_bound, Protocol1Options, TradeRequest, TraderAgent, TraderKind};
use revealmm::switch::plan_switch;
use revealmm::utility::{conditional_price, optimizing_sequence, util_event};
use revealmm::CostModel;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn sp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn xlx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c1_closed_forms() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let g = linspace(-5.0, 5.0, 10);
    let lm = CostModel::lmsr(3);
    for &a in &g {
        for &b in &g {
            for &c in &g {
                let q = [a, b, c];
                let z: f64 = q.iter().map(|x| x.exp()).sum();
                let p: Vec<f64> = q.iter().map(|x| x.exp() / z).collect();
                let price = lm.price(&q).map_err(|e| e.to_string())?;
                if !price.is_singleton(0.0) {
                    return Err(format!("LMSR price not a point at {q:?}"));
                }
                worst = worst.max((lm.cost(&q).unwrap() - z.ln()).abs());
                worst = worst.max(max_abs(&price.center(), &p));
                let r: f64 = p.iter().map(|&x| xlx(x)).sum();
                worst = worst.max((lm.conjugate(&p).unwrap() - r).abs());
            }
        }
    }
    let sq = CostModel::square();
    let g = linspace(-5.0, 5.0, 32);
    for &a in &g {
        for &b in &g {
            let q = [a, b];
            let c = (1.0 + a.exp()).ln() + (1.0 + b.exp()).ln();
            let p = [a.exp() / (1.0 + a.exp()), b.exp() / (1.0 + b.exp())];
            let r: f64 = p.iter().map(|&x| xlx(x) + xlx(1.0 - x)).sum();
            worst = worst.max((sq.cost(&q).unwrap() - c).abs());
            worst = worst.max(max_abs(&sq.price(&q).unwrap().center(), &p));
            worst = worst.max((sq.conjugate(&p).unwrap() - r).abs());
        }
    }
    let pw = CostModel::piecewise_binary();
    let mut grid = linspace(-5.0, 5.0, 1000);
    grid.push(0.0);
    for &x in &grid {
        let p = pw.price(&[x]).unwrap();
        let (lo, hi) = if x > 0.0 {
            (1.0, 1.0)
        } else if x < 0.0 {
            (0.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        worst = worst.max((pw.cost(&[x]).unwrap() - x.max(0.0)).abs());
        worst = worst.max((p.lo()[0] - lo).abs()).max((p.hi()[0] - hi).abs());
    }
    for mu in linspace(0.0, 1.0, 11) {
        worst = worst.max(pw.conjugate(&[mu]).unwrap().abs());
    }
    if pw.conjugate(&[1.2]).unwrap() != f64::INFINITY {
        return Err("piecewise conjugate finite outside [0, 1]".into());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let detail = format!("worst {worst:.2e}, {:.0} ms", elapsed * 1e3);
    if worst <= 1e-9 && elapsed < 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c2_square_switch() -> Verdict {
    let m = CostModel::square();
    let obs = Observation::coordinate(m.space(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_c, mut worst_p) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let s = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let plan = plan_switch(&m, &obs, &s).map_err(|e| e.to_string())?;
        for &q1 in &linspace(-3.0, 3.0, 11) {
            for &q2 in &linspace(-3.0, 3.0, 11) {
                let expect = (q1 - s[0]).max(0.0) + sp(s[0]) + sp(q2);
                worst_c = worst_c.max((plan.switched.cost(&[q1, q2]).unwrap() - expect).abs());
            }
        }
        for &q2 in &linspace(-3.0, 3.0, 11) {
            let p = plan.switched.price(&[s[0], q2]).unwrap();
            let e2 = q2.exp() / (1.0 + q2.exp());
            worst_p = worst_p.max(max_abs(&p.lo(), &[0.0, e2])).max(max_abs(&p.hi(), &[1.0, e2]));
        }
    }
    let detail = format!("cost {worst_c:.2e}, spread {worst_p:.2e}");
    if worst_c <= 1e-9 && worst_p <= 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c3_square_desiderata() -> Verdict {
    let m = CostModel::square();
    let obs = Observation::coordinate(m.space(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut zero, mut ex, mut cond) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let mut lib_ok = true;
    for trial in 0..5 {
        let s = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let plan = plan_switch(&m, &obs, &s).unwrap();
        let opts = CheckOptions {
            enabled: vec![Desideratum::CondPrice, Desideratum::ZeroUtil, Desideratum::ExUtil],
            samples: 100,
            seed: trial,
            ..CheckOptions::default()
        };
        let rep = check_desiderata((&m, &s), (&plan.switched, &s), &obs, &opts).unwrap();
        lib_ok &= rep.passed();
        let div = m.divergence_from(&s).unwrap();
        let div_new = plan.switched.divergence_from(&s).unwrap();
        for x in 0..2 {
            let cell = obs.cell(x);
            let xv = m.space().payoff(cell[0])[0];
            // D - D~ on cell x equals the binary divergence of x from sigma(s1).
            let shift = if xv == 1.0 { -sig(s[0]).ln() } else { -(1.0 - sig(s[0])).ln() };
            for _ in 0..100 {
                let mu = [xv, rng.gen_range(0.0..=1.0)];
                let gap = div.at(&mu).unwrap() - div_new.at(&mu).unwrap();
                ex = ex.max((gap - shift).abs());
            }
            let u = util_event(&plan.switched, &cell, &s).unwrap();
            zero = zero.max(u.value);
            cond = cond.max(max_abs(&u.conditional_price, &[xv, sig(s[1])]));
        }
    }
    let detail = format!("zeroutil {zero:.2e}, exutil {ex:.2e}, condprice {cond:.2e}, audit {}", if lib_ok { "pass" } else { "fail" });
    if zero <= 1e-8 && ex <= 1e-6 && cond <= 1e-7 && lib_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `R(mu) - b_x` at the centre of the middle cell minus the best mixed decomposition, found
/// by scanning the one free weight of the decomposition.
fn count_violation_oracle(s: [f64; 2]) -> f64 {
    let c = sp(s[0]) + sp(s[1]);
    let b0 = c;
    let b2 = c - (s[0] + s[1]);
    let b1 = c - 2.0 * ((s[0] / 2.0).exp() + (s[1] / 2.0).exp()).ln();
    let r_mid = -2.0 * 2f64.ln();
    let local = r_mid - b1;
    let roof = linspace(0.0, 0.5, 200_001)
        .into_iter()
        .map(|a| a * (-b0) + a * (-b2) + (1.0 - 2.0 * a) * (r_mid - b1))
        .fold(f64::INFINITY, f64::min);
    local - roof
}

fn c4_impossibility() -> Verdict {
    let m = CostModel::square();
    let obs = Observation::sum(m.space(), &[0, 1]).unwrap();
    let oracle = count_violation_oracle([1.0, 0.0]);
    let plan = plan_switch(&m, &obs, &[1.0, 0.0]).map_err(|e| e.to_string())?;
    let w = plan.consistency.witness.clone().ok_or("no violation reported at s = (1, 0)")?;
    let at_mid = max_abs(&w.mu, &[0.5, 0.5]) < 1e-12;
    let mut balanced_ok = true;
    for c in [-1.5, 0.0, 0.7, 2.0] {
        balanced_ok &= plan_switch(&m, &obs, &[c, c]).unwrap().consistency.consistent;
        balanced_ok &= count_violation_oracle([c, c]) <= 1e-12;
    }
    let detail = format!(
        "violation {:.6} vs oracle {oracle:.6} (2 ln cosh 1/4 = {:.6}), midpoint {at_mid}, balanced states {}",
        w.violation,
        2.0 * 0.25f64.cosh().ln(),
        if balanced_ok { "pass" } else { "fail" }
    );
    if (w.violation - oracle).abs() <= 1e-4 && at_mid && balanced_ok && !plan.consistency.consistent {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c5_lmsr_conditioning() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(2..=6);
        let m = CostModel::lmsr(k);
        let q: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut event: Vec<usize> = (0..k).filter(|_| rng.gen_bool(0.5)).collect();
        if event.is_empty() {
            event.push(rng.gen_range(0..k));
        }
        let z: f64 = event.iter().map(|&i| q[i].exp()).sum();
        let expect: Vec<f64> = (0..k).map(|i| if event.contains(&i) { q[i].exp() / z } else { 0.0 }).collect();
        let (p, unique) = conditional_price(&m, &event, &q).unwrap();
        if !unique {
            return Err("LMSR conditional price flagged non-unique".into());
        }
        worst = worst.max(max_abs(&p, &expect));
    }
    let detail = format!("worst {worst:.2e}");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `sup over r in [-L, L]^K of min over w in E of rho(w).r - C(q + r) + C(q)` by grids that
/// shrink around the best point.
fn grid_minimax(rows: &[Vec<f64>], event: &[usize], q: &[f64], cost: &dyn Fn(&[f64]) -> f64) -> f64 {
    let k = q.len();
    let limit: f64 = 25.0;
    let c0 = cost(q);
    let value = |r: &[f64]| {
        let qr: Vec<f64> = q.iter().zip(r).map(|(a, b)| a + b).collect();
        let lin = event
            .iter()
            .map(|&w| rows[w].iter().zip(r).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        lin - cost(&qr) + c0
    };
    let n = match k {
        1 => 401,
        2 => 61,
        _ => 25,
    };
    let mut center = vec![0.0; k];
    let mut half: f64 = limit;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..60 {
        let axes: Vec<Vec<f64>> = center
            .iter()
            .map(|&c| linspace((c - half).max(-limit), (c + half).min(limit), n))
            .collect();
        let mut idx = vec![0usize; k];
        let mut best_r = center.clone();
        loop {
            let r: Vec<f64> = (0..k).map(|d| axes[d][idx[d]]).collect();
            let v = value(&r);
            if v > best {
                best = v;
                best_r = r;
            }
            let mut d = 0;
            while d < k {
                idx[d] += 1;
                if idx[d] < n {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == k {
                break;
            }
        }
        center = best_r;
        half *= 0.6;
        if half < 1e-9 {
            break;
        }
    }
    best
}

fn c6_utility_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut count = 0;
    type Ref = Box<dyn Fn(&[f64]) -> f64>;
    let line = std::sync::Arc::new(
        OutcomeSpace::new(
            ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect(),
            vec![vec![0.0], vec![0.25], vec![0.5], vec![0.75], vec![1.0]],
        )
        .unwrap(),
    );
    let line_rows: Vec<Vec<f64>> = line.rows().to_vec();
    let markets: Vec<(CostModel, Ref)> = vec![
        (CostModel::lmsr(2), Box::new(|q: &[f64]| lse(q))),
        (CostModel::lmsr(3), Box::new(|q: &[f64]| lse(q))),
        (CostModel::square(), Box::new(|q: &[f64]| sp(q[0]) + sp(q[1]))),
        (
            CostModel::Lcmm(Box::new(LcmmModel::medal_counts(1).unwrap())),
            Box::new(|q: &[f64]| 2.0 * sp((q[0] + q[2] - q[1]) / 2.0) + q[1]),
        ),
        (
            CostModel::piecewise_on(line.clone()),
            Box::new(move |q: &[f64]| line_rows.iter().map(|r| r[0] * q[0]).fold(f64::NEG_INFINITY, f64::max)),
        ),
    ];
    for (m, reference) in &markets {
        let n = m.space().len();
        let rows = m.space().rows().to_vec();
        let mut events: Vec<Vec<usize>> =
            (1..(1usize << n) - 1).map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect()).collect();
        while events.len() > 6 {
            events.remove(rng.gen_range(0..events.len()));
        }
        for _ in 0..2 {
            let q: Vec<f64> = (0..m.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
            for e in &events {
                let lib = util_event(m, e, &q).map_err(|err| err.to_string())?.value;
                let brute = grid_minimax(&rows, e, &q, reference.as_ref());
                worst = worst.max((lib - brute).abs());
                count += 1;
            }
        }
    }
    let detail = format!("{count} (market, state, event) triples, worst {worst:.2e}");
    if worst <= 1e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The arbitrage problem on medal counts collapses to a scalar shift `t` of the constraint
/// direction; scan it with shrinking grids.
fn medal_oracle(n: usize, q: &[f64]) -> f64 {
    let f = |t: f64| {
        let binary: f64 = (0..n).map(|i| sp(q[i] - t)).sum();
        let count: Vec<f64> = (0..=n).map(|y| q[n + y] + t * y as f64).collect();
        binary + lse(&count)
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        let grid = linspace(lo, hi, 2001);
        let (mut bt, mut bv) = (0.0, f64::INFINITY);
        for &t in &grid {
            let v = f(t);
            if v < bv {
                bv = v;
                bt = t;
            }
        }
        best = best.min(bv);
        let step = (hi - lo) / 2000.0;
        lo = bt - 4.0 * step;
        hi = bt + 4.0 * step;
    }
    best
}

fn c7_lcmm_certificates() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut worst_gap) = (0.0f64, 0.0f64);
    let mut certified = true;
    for n in 1..=3 {
        let model = LcmmModel::medal_counts(n).unwrap();
        for _ in 0..200 {
            let q: Vec<f64> = (0..2 * n + 1).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let sol = lcmm_cost(&model, &q).map_err(|e| e.to_string())?;
            worst = worst.max((sol.value - medal_oracle(n, &q)).abs());
            worst_gap = worst_gap.max(sol.certificate_gap);
            certified &= certificate_check(&model, &q, &sol.eta, 1e-7).unwrap();
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let detail = format!("600 states, value {worst:.2e}, certificate gap {worst_gap:.2e}, {elapsed:.2} s");
    if worst <= 1e-4 && worst_gap <= 1e-7 && certified && elapsed < 30.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c8_decomposition() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst, mut drift) = (0.0f64, 0.0f64);
    for trial in 0..200 {
        let schedules = vec![
            Schedule::Exponential { rate: rng.gen_range(0.0..1.0) },
            Schedule::LinearToFloor { rate: rng.gen_range(0.0..0.5), floor: 1e-3 },
            if trial % 2 == 0 { Schedule::Constant } else { Schedule::Exponential { rate: rng.gen_range(0.0..1.0) } },
        ];
        let gm = GradualMarket::new(LcmmModel::medal_counts(2).unwrap(), schedules, 0.0).unwrap();
        let space = gm.model().space();
        let mu = space.sample_hull(&space.all(), &mut rng);
        let q: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = rng.gen_range(0.0..2.0);
        let t_new = t + rng.gen_range(0.0..2.0);
        let d = gm.divergence_decomposition(&mu, &q, t, t_new).map_err(|e| e.to_string())?;
        worst = worst.max((d.lhs - d.rhs).abs());
        let st = gm.state_at(&q, t).unwrap();
        let nx = gm.new_state(&st, t_new).unwrap();
        drift = drift.max(gm.price_drift(&st, &nx).unwrap());
    }
    let detail = format!("200 draws, |lhs - rhs| {worst:.2e}, price drift {drift:.2e}");
    if worst <= 1e-6 && drift <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c9_drop_formula() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let mut audits_ok = true;
    let mut rows = 0;
    for g in 0..3 {
        let mut schedules = vec![Schedule::Constant; 3];
        schedules[g] = Schedule::Exponential { rate: 0.5 };
        let gm = GradualMarket::new(LcmmModel::medal_counts(2).unwrap(), schedules, 0.0).unwrap();
        for _ in 0..5 {
            let q: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t = rng.gen_range(0.0..1.0);
            let t_new = t + rng.gen_range(0.1..1.5);
            let audit = gm
                .partial_decrease_audit(g, &q, t, t_new, &CheckOptions::default())
                .map_err(|e| e.to_string())?;
            audits_ok &= audit.tightness.is_tight() && audit.desiderata.passed();
            for d in &audit.drops {
                worst = worst.max(d.error);
                rows += 1;
            }
        }
    }
    let detail = format!("{rows} realizations over 3 binary blocks, worst {worst:.2e}, audits {}", if audits_ok { "pass" } else { "fail" });
    if worst <= 1e-6 && audits_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_run(rng: &mut ChaCha8Rng, k: usize, vertices: &[Vec<f64>], interior: Vec<f64>) -> (Vec<TraderAgent>, Vec<TradeRequest>, Vec<f64>) {
    let vertex = vertices[rng.gen_range(0..vertices.len())].clone();
    let traders = vec![
        TraderAgent::new("noise", TraderKind::Noise { scale: 1.0 }),
        TraderAgent::new("sure", TraderKind::Belief { mu: vertex }),
        TraderAgent::new("soft", TraderKind::Belief { mu: interior }),
    ];
    let mut times: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..4.0)).collect();
    times.sort_by(f64::total_cmp);
    let requests = times
        .into_iter()
        .map(|time| TradeRequest { time, trader: if rng.gen_bool(0.6) { 0 } else { rng.gen_range(1..3) } })
        .collect();
    let s0 = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (traders, requests, s0)
}

fn c10_loss_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let runs = 1000;
    let mut min_slack = f64::INFINITY;
    let mut summary = Vec::new();
    let opts = |seed: u64| Protocol1Options { seed, trust_exposed: true, ..Protocol1Options::default() };
    let markets: Vec<(&str, CostModel, Observation, LcmmModel)> = {
        let sq = CostModel::square();
        let sq_obs = Observation::coordinate(sq.space(), 0).unwrap();
        let mc = LcmmModel::medal_counts(2).unwrap();
        let mc_cost = CostModel::Lcmm(Box::new(mc.clone()));
        let mc_obs = Observation::block(mc_cost.space(), &[0]).unwrap();
        vec![("square", sq, sq_obs, LcmmModel::square().unwrap()), ("medal_counts(2)", mc_cost, mc_obs, mc)]
    };
    for (name, cost, obs, lcmm) in &markets {
        let space = cost.space();
        let k = space.dim();
        let mut worst1 = f64::INFINITY;
        for seed in 0..runs {
            // The soft belief trader is informed: its belief lies in the revealed cell.
            let outcome = rng.gen_range(0..space.len());
            let interior = space.sample_hull(&obs.cell(obs.realization_of(outcome)), &mut rng);
            let (traders, requests, s0) = random_run(&mut rng, k, space.rows(), interior);
            let ledger = run_protocol1(cost, &s0, obs, &traders, &requests, 2.0, outcome, &opts(seed))
                .map_err(|e| format!("{name} protocol 1: {e}"))?;
            let bound = wc_loss_bound(cost, &s0).unwrap();
            let slack = verify_loss(&ledger, bound, 1e-6).map_err(|v| format!("{name} protocol 1 run {seed}: loss {} > {}", v.loss, v.bound))?;
            worst1 = worst1.min(slack);
        }
        let mut worst2 = f64::INFINITY;
        for seed in 0..runs {
            let schedules = (0..lcmm.blocks().len())
                .map(|_| match rng.gen_range(0..3) {
                    0 => Schedule::Constant,
                    1 => Schedule::Exponential { rate: rng.gen_range(0.0..1.0) },
                    _ => Schedule::LinearToFloor { rate: rng.gen_range(0.0..0.5), floor: 1e-3 },
                })
                .collect();
            let gm = GradualMarket::new(lcmm.clone(), schedules, 0.0).unwrap();
            let interior = space.sample_hull(&space.all(), &mut rng);
            let (traders, requests, s0) = random_run(&mut rng, k, space.rows(), interior);
            let outcome = rng.gen_range(0..space.len());
            let ledger = run_protocol2(&gm, &s0, 0.0, &traders, &requests, outcome, seed)
                .map_err(|e| format!("{name} protocol 2: {e}"))?;
            let bound = wc_loss_bound(&gm.cost_model_at(0.0).unwrap(), &s0).unwrap();
            let slack = verify_loss(&ledger, bound, 1e-6).map_err(|v| format!("{name} protocol 2 run {seed}: loss {} > {}", v.loss, v.bound))?;
            worst2 = worst2.min(slack);
        }
        min_slack = min_slack.min(worst1).min(worst2);
        summary.push(format!("{name} min slack {worst1:.2e}/{worst2:.2e}"));
    }
    let ln4 = wc_loss_bound(&CostModel::lmsr(4), &[0.0; 4]).unwrap();
    let detail = format!("{} runs each; {}; LMSR(4) bound {ln4:.6}", runs, summary.join(", "));
    if min_slack >= -1e-6 && (ln4 - 4f64.ln()).abs() <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c11_optimizing_sequence() -> Verdict {
    let m = CostModel::lmsr(3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut longest = 0;
    for _ in 0..20 {
        let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let event: Vec<usize> = match rng.gen_range(0..6) {
            0 => vec![0],
            1 => vec![1],
            2 => vec![2],
            3 => vec![0, 1],
            4 => vec![0, 2],
            _ => vec![1, 2],
        };
        let seq = optimizing_sequence(&m, &event, &q, 200).map_err(|e| e.to_string())?;
        if seq.trace.windows(2).any(|w| w[1] > w[0]) {
            return Err("divergence trace increased".into());
        }
        let first_below = seq.trace.iter().position(|d| *d < 1e-3).ok_or_else(|| format!("trace ends at {:?}", seq.trace.last()))?;
        longest = longest.max(first_below + 1);
        worst = worst.max(*seq.trace.last().unwrap());
    }
    let detail = format!("20 runs, below 1e-3 by step {longest}, final worst {worst:.2e}");
    if longest <= 200 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c12_determinism() -> Verdict {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    files.sort();
    let render = |p: &PathBuf, fmt: Format, run: bool| -> Result<Vec<u8>, String> {
        let sc = Scenario::load(p).map_err(|e| e.to_string())?;
        let rep = if run { scenario::run(&sc, &RunFlags::default()) } else { scenario::check(&sc, &RunFlags::default()) }
            .map_err(|e| format!("{}: {e}", p.display()))?;
        let mut out = Vec::new();
        scenario::write_records(&rep.records, fmt, &mut out).map_err(|e| e.to_string())?;
        Ok(out)
    };
    for f in &files {
        for fmt in [Format::Jsonl, Format::Csv] {
            for run in [true, false] {
                if render(f, fmt, run)? != render(f, fmt, run)? {
                    return Err(format!("{} differs between runs", f.display()));
                }
            }
        }
    }
    if files.len() < 12 {
        return Err(format!("only {} bundled scenarios", files.len()));
    }
    Ok(format!("{} scenarios, run and check, jsonl and csv", files.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("closed-form fidelity", c1_closed_forms),
        ("square switch reproduction", c2_square_switch),
        ("square desiderata", c3_square_desiderata),
        ("count impossibility", c4_impossibility),
        ("LMSR conditioning", c5_lmsr_conditioning),
        ("event utility vs brute force", c6_utility_oracle),
        ("LCMM certificates", c7_lcmm_certificates),
        ("time-decay decomposition", c8_decomposition),
        ("utility drop formula", c9_drop_formula),
        ("worst-case loss bounds", c10_loss_bounds),
        ("optimizing sequence", c11_optimizing_sequence),
        ("determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of 12 criteria pass", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
