//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p mmimo-iot --test acceptance [-- 3 7]` runs all criteria or
//! only the listed ones. Criteria run one after another so the timings are
//! not distorted by each other.

mod common;

use std::time::Instant;

use common::peeling::{sweep_orbits, Space};
use mmimo_iot::channel::ArrayConfig;
use mmimo_iot::estimation::LinkBudget;
use mmimo_iot::harness::{self, ResultTable};
use mmimo_iot::urllc::{outage_mc, ChannelConfig, FrameConfig, LinkExperiment, LinkScheme, SubcarrierSpacing};
use statrs::function::gamma::gamma_lr;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    title: &'static str,
    limit_s: f64,
    check: fn() -> Outcome,
}

fn sigma_band(p_hat: f64, p: f64, n: u64) -> (bool, f64) {
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    let z = (p_hat - p) / sd;
    (z.abs() <= 3.0, z)
}

fn perfect_csi_outage(m: usize, budget: LinkBudget, payload_bits: u32, trials: u64, seed: u64) -> Result<f64, String> {
    let exp = LinkExperiment::new(ChannelConfig::iid(ArrayConfig::ula(m).unwrap()), budget, trials, seed);
    let frame = FrameConfig::new(28, payload_bits, SubcarrierSpacing::Khz60, 1).unwrap();
    Ok(outage_mc(&exp, LinkScheme::PerfectCsi, &frame, 0).map_err(|e| e.to_string())?.p_outage)
}

fn rayleigh_siso() -> Outcome {
    let n = 100_000;
    let mut notes = Vec::new();
    let mut ok = true;
    for (i, (bits, snr_db)) in [(28u32, 10.0), (14, 5.0), (56, 15.0), (28, 0.0), (7, 0.0)].into_iter().enumerate() {
        let budget = LinkBudget::from_snr_db(snr_db).unwrap();
        let gamma_th = (f64::from(bits) / 28.0).exp2() - 1.0;
        let p = 1.0 - (-gamma_th / budget.snr()).exp();
        let p_hat = perfect_csi_outage(1, budget, bits, n, 100 + i as u64)?;
        let (inside, z) = sigma_band(p_hat, p, n);
        ok &= inside;
        notes.push(format!("R={:.2} {snr_db}dB: {p_hat:.4} vs {p:.4} (z={z:+.2})", f64::from(bits) / 28.0));
    }
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn mrt_gamma() -> Outcome {
    let n = 100_000;
    let mut notes = Vec::new();
    let mut ok = true;
    // γ = (ρ/σ²)‖h‖² with ‖h‖² ~ Gamma(M, 1), so P_out = P(M, γ_th σ²/ρ). γ_th = 1 here.
    for (i, (m, x)) in [(2usize, 0.5), (8, 4.0), (64, 52.0)].into_iter().enumerate() {
        let p = gamma_lr(m as f64, x);
        let p_hat = perfect_csi_outage(m, LinkBudget::new(1.0, x).unwrap(), 28, n, 200 + i as u64)?;
        let (inside, z) = sigma_band(p_hat, p, n);
        ok &= inside;
        notes.push(format!("M={m}: {p_hat:.4} vs {p:.4} (z={z:+.2})"));
    }
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn run_recipe(name: &str) -> Result<ResultTable, String> {
    let r = harness::recipe(name).ok_or(format!("no recipe {name}"))?;
    harness::run(&r.config).map_err(|e| e.to_string())
}

fn num(t: &ResultTable, row: usize, col: &str) -> f64 {
    t.get(row, col).and_then(|c| c.as_f64()).unwrap_or_else(|| panic!("column {col} row {row}"))
}

fn text<'a>(t: &'a ResultTable, row: usize, col: &str) -> &'a str {
    t.get(row, col).and_then(|c| c.as_str()).unwrap_or_else(|| panic!("column {col} row {row}"))
}

fn outage_training_gap() -> Outcome {
    let t = run_recipe("outage-training")?;
    let best = |scheme: &str| {
        (0..t.rows.len())
            .filter(|&r| text(&t, r, "scheme") == scheme)
            .min_by(|&a, &b| num(&t, a, "p_outage").total_cmp(&num(&t, b, "p_outage")).then(num(&t, a, "t").total_cmp(&num(&t, b, "t"))))
            .unwrap()
    };
    let (mrt, sv) = (best("tdd-mrt"), best("tdd-sv"));
    let p_mrt = num(&t, mrt, "p_outage");
    let p_sv = num(&t, sv, "p_outage");
    let rel = |r: usize| 0.5 * (num(&t, r, "ci_hi") - num(&t, r, "ci_lo")) / num(&t, r, "p_outage");
    let ratio = p_mrt / p_sv;
    let msg = format!(
        "MRT min {p_mrt:.3e} at t={}, SV min {p_sv:.3e} at t={}, ratio {ratio:.1}, CI half-widths {:.0}% / {:.0}%",
        num(&t, mrt, "t"),
        num(&t, sv, "t"),
        100.0 * rel(mrt),
        100.0 * rel(sv)
    );
    if p_sv > 0.0 && (5.0..=500.0).contains(&ratio) && rel(mrt) < 0.3 && rel(sv) < 0.3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fdd_optimal_ns() -> Outcome {
    let t = run_recipe("fdd-ns-sweep")?;
    let opt = |np: f64| {
        (0..t.rows.len())
            .find(|&r| num(&t, r, "num_paths") == np && num(&t, r, "optimal") == 1.0)
            .map(|r| (num(&t, r, "n_s") as usize, num(&t, r, "p_outage")))
            .unwrap()
    };
    let (ns4, p4) = opt(4.0);
    let (ns16, p16) = opt(16.0);
    let msg = format!("N_P=4: N_s*={ns4} (P_out {p4:.2e}); N_P=16: N_s*={ns16} (P_out {p16:.2e})");
    if ns4 == 4 && (4..=8).contains(&ns16) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn latency_reliability_order() -> Outcome {
    let t = run_recipe("latency-reliability")?;
    let mut lengths: Vec<usize> = (0..t.rows.len()).map(|r| num(&t, r, "N") as usize).collect();
    lengths.sort_unstable();
    lengths.dedup();
    let at = |scheme: &str, n: usize| (0..t.rows.len()).find(|&r| text(&t, r, "scheme") == scheme && num(&t, r, "N") as usize == n).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for &n in &lengths {
        let (sv, mrt, fdd) = (at("tdd-sv", n), at("tdd-mrt", n), at("fdd", n));
        let rel = |r| num(&t, r, "reliability");
        let params = [num(&t, sv, "best_param"), num(&t, mrt, "best_param"), num(&t, fdd, "best_param")];
        ok &= rel(sv) >= rel(mrt) && rel(mrt) >= rel(fdd);
        ok &= (1.0..=3.0).contains(&params[0]) && (1.0..=3.0).contains(&params[1]) && (3.0..=9.0).contains(&params[2]);
        notes.push(format!(
            "N={n}: 1-R sv {:.1e} t={} / mrt {:.1e} t={} / fdd {:.1e} Ns={}",
            1.0 - rel(sv),
            params[0],
            1.0 - rel(mrt),
            params[1],
            1.0 - rel(fdd),
            params[2]
        ));
    }
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn tdm_sdm_latency() -> Outcome {
    let t = run_recipe("tdm-vs-sdm")?;
    let target = 1e-3;
    // Smallest frame length at which both devices of a scheme meet the target.
    let meet = |scheme: &str| {
        let mut lengths: Vec<usize> = (0..t.rows.len()).filter(|&r| text(&t, r, "scheme") == scheme).map(|r| num(&t, r, "N") as usize).collect();
        lengths.dedup();
        lengths.into_iter().find_map(|n| {
            let rows: Vec<usize> = (0..t.rows.len()).filter(|&r| text(&t, r, "scheme") == scheme && num(&t, r, "N") as usize == n).collect();
            rows.iter().all(|&r| num(&t, r, "p_outage") <= target).then(|| (n, num(&t, rows[0], "avg_device_latency")))
        })
    };
    let (Some((n_sdm, avg_sdm)), Some((n_tdm, avg_tdm))) = (meet("sdm"), meet("tdm")) else {
        return Err("a scheme never reaches the target outage in the swept lengths".into());
    };
    let ratio = avg_tdm / avg_sdm;
    let msg = format!("system latency SDM {n_sdm} vs TDM {n_tdm} symbols; avg device latency SDM {avg_sdm} vs TDM {avg_tdm} (ratio {ratio:.3})");
    if n_tdm > n_sdm && (ratio - 1.0).abs() <= 0.25 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ra_rows(t: &ResultTable, protocol: &str) -> Vec<usize> {
    (0..t.rows.len()).filter(|&r| text(t, r, "protocol") == protocol).collect()
}

fn sucre_resolution() -> Outcome {
    let mut cfg = harness::recipe("ra-crowded").unwrap().config;
    cfg.population.loads = vec![1.0];
    cfg.ra.protocols = vec![mmimo_iot::mmtc::RaProtocol::SucreHard];
    let t = harness::run(&cfg).map_err(|e| e.to_string())?;
    let frac = num(&t, 0, "fresh_resolved_frac");
    let msg = format!(
        "K0={} Pa={} Pp={}: {:.1}% of collisions resolved (inside the retry loop: {:.1}%)",
        num(&t, 0, "K0"),
        num(&t, 0, "Pa"),
        num(&t, 0, "Pp"),
        100.0 * frac,
        100.0 * num(&t, 0, "resolved_frac")
    );
    if (0.80..=0.95).contains(&frac) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn crowded_ordering() -> Outcome {
    let t = run_recipe("ra-crowded")?;
    let (base, hard, soft) = (ra_rows(&t, "baseline"), ra_rows(&t, "sucre-hard"), ra_rows(&t, "sucre-soft"));
    let mut ok = num(&t, 0, "seed") >= 0.0;
    let mut notes = Vec::new();
    for i in 0..base.len() {
        let (b, h, s) = (base[i], hard[i], soft[i]);
        let gap = |a: usize, c: usize| {
            let se = (num(&t, a, "avg_attempts_se").powi(2) + num(&t, c, "avg_attempts_se").powi(2)).sqrt();
            (num(&t, c, "avg_attempts") - num(&t, a, "avg_attempts")) / se
        };
        let (z_sh, z_hb) = (gap(s, h), gap(h, b));
        ok &= z_sh > 3.0 && z_hb > 3.0;
        notes.push(format!(
            "load {}: soft {:.3} < hard {:.3} < baseline {:.3} ({z_sh:.0}σ, {z_hb:.0}σ)",
            num(&t, b, "load"),
            num(&t, s, "avg_attempts"),
            num(&t, h, "avg_attempts"),
            num(&t, b, "avg_attempts")
        ));
    }
    let blocks = harness::recipe("ra-crowded").unwrap().config.ra.blocks;
    ok &= blocks >= 1000;
    let msg = format!("{} over {blocks} blocks", notes.join("; "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn peeling_equivalence() -> Outcome {
    let s = sweep_orbits(&Space { slots: 4, pilots: 2 }, 6);
    let msg = format!("{} instances (every instance up to device, slot and pilot relabelling)", s.instances);
    if s.failures.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; mismatches: {}", s.failures.join(" | ")))
    }
}

fn property_suites() -> Outcome {
    let mut failed = Vec::new();
    let all = common::properties::all();
    for (name, prop, cases) in &all {
        if let Err(e) = prop(*cases) {
            failed.push(format!("{name}: {e}"));
        }
    }
    if failed.is_empty() {
        Ok(format!("{} suites", all.len()))
    } else {
        Err(failed.join(" | "))
    }
}

fn main() {
    let criteria = [
        Criterion { id: 1, title: "Rayleigh SISO outage oracle", limit_s: 5.0, check: rayleigh_siso },
        Criterion { id: 2, title: "MRT incomplete-gamma oracle", limit_s: 30.0, check: mrt_gamma },
        Criterion { id: 3, title: "SV vs MRT minimum outage gap", limit_s: 300.0, check: outage_training_gap },
        Criterion { id: 4, title: "FDD optimal N_s", limit_s: 300.0, check: fdd_optimal_ns },
        Criterion { id: 5, title: "latency-reliability ordering", limit_s: 600.0, check: latency_reliability_order },
        Criterion { id: 6, title: "TDM vs SDM latency", limit_s: 300.0, check: tdm_sdm_latency },
        Criterion { id: 7, title: "SUCRe collision resolution", limit_s: 60.0, check: sucre_resolution },
        Criterion { id: 8, title: "crowded RA ordering", limit_s: 300.0, check: crowded_ordering },
        Criterion { id: 9, title: "coded RA peeling equivalence", limit_s: 60.0, check: peeling_equivalence },
        Criterion { id: 10, title: "property suites", limit_s: 120.0, check: property_suites },
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.check)();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= c.limit_s;
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let timing = if in_time { String::new() } else { " OVER TIME LIMIT".to_string() };
        println!(
            "criterion {:>2} {} {} [{secs:.1} s / {:.0} s{timing}] {detail}",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.title,
            c.limit_s
        );
        failures += usize::from(!pass);
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
