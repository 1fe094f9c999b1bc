//! The experiment registry.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use percolab_core::calibration::{window_width_check, CalibrationOptions};
use percolab_core::component_graphs::{extract_weighted_components, full_component_graph, girth_scan, metric_comparison};
use percolab_core::limit_oracle::{default_horizon, er_size_vector, er_window_probability, kappa_er, sample_excursions};
use percolab_core::multiplicative::{check_conditions, DEFAULT_ETA0, DEFAULT_R0};
use percolab_core::percolation::{diameters, long_thin_scan, tail_and_l4_stats, DiameterOptions, PercolationSample};
use percolab_core::rng::derive_seed;
use percolab_core::stats::{distance_matrix_test, energy_test, median};
use percolab_core::substrate::TransitiveGraph;

use crate::config::ExperimentConfig;
use crate::output::{num, write_bundle, ExperimentOutput, Table};
use crate::pipeline::{calibrate_point, calibrate_window, coupled_pair, er_m1_matrix, hypercube_m1_matrix, hypercube_top_k, replicates};

pub const EXPERIMENTS: &[&str] = &[
    "sizes-vs-er",
    "sizes-vs-brownian",
    "mult-vs-sprinkled",
    "metric-comparison",
    "window-width",
    "tightness-scan",
    "conditions-report",
    "noop",
];

/// Seed for one `(m, lambda)` cell of an experiment.
fn cell_seed(config: &ExperimentConfig, m: usize, lambda: f64) -> u64 {
    derive_seed(config.seed, &[m as u64, lambda.to_bits()])
}

fn cells(config: &ExperimentConfig) -> impl Iterator<Item = (usize, f64)> + '_ {
    config.m.iter().flat_map(move |&m| config.lambda.iter().map(move |&l| (m, l)))
}

fn size_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["side", "m", "lambda", "replicate"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=k).map(|i| format!("s{i}")));
    h
}

fn size_rows(table: &mut Table, side: &str, m: usize, lambda: f64, vectors: &[Vec<f64>]) {
    for (r, v) in vectors.iter().enumerate() {
        let mut row = vec![side.to_string(), m.to_string(), num(lambda), r.to_string()];
        row.extend(v.iter().map(|&x| num(x)));
        table.push(row);
    }
}

fn new_table(name: &str, header: Vec<String>) -> Table {
    Table {
        name: name.into(),
        header,
        rows: Vec::new(),
    }
}

/// Calibration table shared by most experiments.
fn calibration_table() -> Table {
    Table::new("calibration", &["m", "lambda", "kappa", "kappa_se", "p_c_hat", "p_c_se", "probes", "ambiguous"])
}

fn sizes_vs_er(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let k = config.top_k;
    let mut sizes = new_table("sizes", size_header(k));
    let mut cal = calibration_table();
    for (m, lambda) in cells(config) {
        let base = cell_seed(config, m, lambda);
        let g = TransitiveGraph::hypercube(m)?;
        let (kappa, c) = calibrate_point(&g, lambda, config.budget, config.kappa_samples, derive_seed(base, &[0]))?;
        push_calibration(&mut cal, m, lambda, &kappa, &c);
        let p = c.p_c_hat.value;
        let n = g.vertex_count();
        let cube = replicates(derive_seed(base, &[1]), config.seeds, |s| hypercube_top_k(&g, p, s, k))?;
        let er = replicates(derive_seed(base, &[2]), config.seeds, |s| Ok(er_size_vector(n, lambda, s, k)?))?;
        size_rows(&mut sizes, "hypercube", m, lambda, &cube);
        size_rows(&mut sizes, "er", m, lambda, &er);
        if config.seeds > 0 {
            let r = energy_test(&cube, &er, config.n_perm, derive_seed(base, &[3]))?;
            out.reports.push((format!("m={m},lambda={lambda:?}"), r));
        }
    }
    out.tables.push(cal);
    out.tables.push(sizes);
    Ok(())
}

fn push_calibration(t: &mut Table, m: usize, lambda: f64, kappa: &percolab_core::stats::Estimate, c: &percolab_core::calibration::PcCalibration) {
    t.push(vec![
        m.to_string(),
        num(lambda),
        num(kappa.mean),
        num(kappa.se),
        num(c.p_c_hat.value),
        num(c.p_c_hat.se),
        c.probes.to_string(),
        c.ambiguous.to_string(),
    ]);
}

fn sizes_vs_brownian(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let k = config.top_k;
    let mut sizes = new_table("sizes", size_header(k));
    let mut cal = calibration_table();
    for (m, lambda) in cells(config) {
        let base = cell_seed(config, m, lambda);
        let g = TransitiveGraph::hypercube(m)?;
        let (kappa, c) = calibrate_point(&g, lambda, config.budget, config.kappa_samples, derive_seed(base, &[0]))?;
        push_calibration(&mut cal, m, lambda, &kappa, &c);
        let p = c.p_c_hat.value;
        let horizon = default_horizon(lambda);
        let cube = replicates(derive_seed(base, &[1]), config.seeds, |s| hypercube_top_k(&g, p, s, k))?;
        let bm = replicates(derive_seed(base, &[2]), config.seeds, |s| {
            Ok(sample_excursions(lambda, horizon, config.step, s)?.top_k(k))
        })?;
        size_rows(&mut sizes, "hypercube", m, lambda, &cube);
        size_rows(&mut sizes, "brownian", m, lambda, &bm);
        if config.seeds > 0 {
            let r = energy_test(&cube, &bm, config.n_perm, derive_seed(base, &[3]))?;
            out.reports.push((format!("m={m},lambda={lambda:?}"), r));
        }
    }
    out.tables.push(cal);
    out.tables.push(sizes);
    Ok(())
}

fn window_table() -> Table {
    Table::new(
        "window",
        &["m", "lambda", "p_c_hat", "p_s", "m_s", "chi_ps", "q_lambda", "p_c_prime", "kappa"],
    )
}

fn push_window(t: &mut Table, w: &percolab_core::calibration::WindowParams) {
    t.push(vec![
        w.m.to_string(),
        num(w.lambda),
        num(w.p_c_hat.value),
        num(w.p_s),
        w.m_s.to_string(),
        num(w.chi_ps_hat.value),
        num(w.q_lambda),
        num(w.p_c_prime),
        num(w.kappa_hat.value),
    ]);
}

fn mult_vs_sprinkled(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let k = config.top_k;
    let mut win = window_table();
    let mut disc = Table::new(
        "discrepancy",
        &["m", "lambda", "replicate", "retained", "excluded_mass", "sigma2_ratio", "mult_edges", "sprinkled_edges", "discrepancy"],
    );
    let mut classes = new_table("class_masses", size_header(k));
    for (m, lambda) in cells(config) {
        let base = cell_seed(config, m, lambda);
        let cw = calibrate_window(m, lambda, config.budget, config.kappa_samples, derive_seed(base, &[0]))?;
        let w = &cw.window;
        push_window(&mut win, w);
        let g = TransitiveGraph::hypercube(m)?;
        let scale = (g.vertex_count() as f64).powf(-2.0 / 3.0);
        let rows = replicates(derive_seed(base, &[1]), config.seeds, |s| {
            let (d, pair) = coupled_pair(&g, w, s)?;
            let top = |sprinkled: bool| {
                let mut v: Vec<f64> = pair.class_masses(sprinkled).iter().take(k).map(|&x| x as f64 * scale).collect();
                v.resize(k, 0.0);
                v
            };
            Ok((d, top(false), top(true)))
        })?;
        let mut discs = Vec::new();
        for (r, (d, _, _)) in rows.iter().enumerate() {
            disc.push(vec![
                m.to_string(),
                num(lambda),
                r.to_string(),
                d.retained.to_string(),
                d.excluded_mass.to_string(),
                num(d.sigma2_ratio),
                d.mult_edges.to_string(),
                d.sprinkled_edges.to_string(),
                num(d.discrepancy),
            ]);
            discs.push(d.discrepancy);
        }
        let mult: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
        let spr: Vec<Vec<f64>> = rows.iter().map(|r| r.2.clone()).collect();
        size_rows(&mut classes, "multiplicative", m, lambda, &mult);
        size_rows(&mut classes, "sprinkled", m, lambda, &spr);
        if !discs.is_empty() {
            out.note(&format!("median_discrepancy m={m},lambda={lambda:?}"), median(&discs));
            let r = energy_test(&mult, &spr, config.n_perm, derive_seed(base, &[2]))?;
            out.reports.push((format!("m={m},lambda={lambda:?}"), r));
        }
    }
    out.tables.extend([win, disc, classes]);
    Ok(())
}

fn metric_comparison_exp(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let k = config.points;
    let mut header: Vec<String> = ["side", "m", "lambda", "replicate"].iter().map(|s| s.to_string()).collect();
    for a in 0..k {
        for b in (a + 1)..k {
            header.push(format!("d{a}{b}"));
        }
    }
    let mut mats = new_table("matrices", header);
    let mut win = window_table();
    let mut pairs = Table::new("pairs", &["m", "lambda", "replicate", "pair", "d_cube", "d_comp", "outside_vstar"]);
    for (m, lambda) in cells(config) {
        let base = cell_seed(config, m, lambda);
        let cw = calibrate_window(m, lambda, config.budget, config.kappa_samples, derive_seed(base, &[0]))?;
        let w = cw.window.clone();
        push_window(&mut win, &w);
        let g = TransitiveGraph::hypercube(m)?;
        let n = g.vertex_count();
        let p = w.p_c_hat.value;
        let p_er = er_window_probability(n, lambda)?;
        let cube = replicates(derive_seed(base, &[1]), config.seeds, |s| hypercube_m1_matrix(&g, p, s, k))?;
        let er = replicates(derive_seed(base, &[2]), config.seeds, |s| er_m1_matrix(n, p_er, s, k))?;
        for (side, list) in [("hypercube", &cube), ("er", &er)] {
            for (r, mat) in list.iter().enumerate() {
                let mut row = vec![side.to_string(), m.to_string(), num(lambda), r.to_string()];
                for a in 0..k {
                    for b in (a + 1)..k {
                        row.push(num(mat[a * k + b]));
                    }
                }
                mats.push(row);
            }
        }
        if config.seeds > 0 {
            let r = distance_matrix_test(&cube, &er, k, config.n_perm, derive_seed(base, &[3]))?;
            out.reports.push((format!("m={m},lambda={lambda:?}"), r));
        }
        let cmp = replicates(derive_seed(base, &[4]), config.reps, |s| {
            let sample = PercolationSample::new(g.clone(), s);
            let wc = extract_weighted_components(&sample, &w)?;
            Ok(metric_comparison(&sample, &wc, w.chi_ps_hat.value, w.p_c_prime, 1, config.n_pairs, derive_seed(s, &[1]))?)
        })?;
        for (r, list) in cmp.iter().enumerate() {
            for (i, mp) in list.iter().enumerate() {
                pairs.push(vec![
                    m.to_string(),
                    num(lambda),
                    r.to_string(),
                    i.to_string(),
                    num(mp.d_cube),
                    num(mp.d_comp),
                    mp.outside_vstar.to_string(),
                ]);
            }
        }
    }
    out.tables.extend([win, mats, pairs]);
    Ok(())
}

/// Calibrates at the smallest and largest `lambda` of the config, `reps`
/// times per `m`.
fn window_width(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let l1 = config.lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let l2 = config.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if l2.partial_cmp(&l1) != Some(std::cmp::Ordering::Greater) {
        bail!("window-width needs two distinct lambda values");
    }
    let mut t = Table::new("width", &["m", "rep", "lambda1", "lambda2", "p_c1", "p_c2", "ratio", "ci_low", "ci_high"]);
    for &m in &config.m {
        let g = TransitiveGraph::hypercube(m)?;
        let base = cell_seed(config, m, 0.0);
        let k1 = kappa_er(l1, g.vertex_count(), config.kappa_samples, derive_seed(base, &[1]))?;
        let k2 = kappa_er(l2, g.vertex_count(), config.kappa_samples, derive_seed(base, &[2]))?;
        let runs = replicates(derive_seed(base, &[3]), config.reps, |s| {
            Ok(window_width_check(&g, l1, k1.mean, l2, k2.mean, CalibrationOptions::new(config.budget, s))?)
        })?;
        let mut ratios = Vec::new();
        for (r, w) in runs.iter().enumerate() {
            t.push(vec![
                m.to_string(),
                r.to_string(),
                num(l1),
                num(l2),
                num(w.low.p_c_hat.value),
                num(w.high.p_c_hat.value),
                num(w.ratio),
                num(w.ci_low),
                num(w.ci_high),
            ]);
            ratios.push(w.ratio);
        }
        if !ratios.is_empty() {
            out.note(&format!("median_ratio m={m}"), median(&ratios));
        }
    }
    out.tables.push(t);
    Ok(())
}

/// Long-thin ball frequencies and l4 tail statistics at the calibrated point.
fn tightness_scan(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let mut scan = Table::new("long_thin", &["m", "lambda", "replicate", "eps", "r", "m_max", "count", "examined", "frequency"]);
    let mut tails = Table::new("tails", &["m", "lambda", "replicate", "size_tail", "diam_tail", "bounded_terms"]);
    let mut cal = calibration_table();
    for (m, lambda) in cells(config) {
        let base = cell_seed(config, m, lambda);
        let g = TransitiveGraph::hypercube(m)?;
        let (kappa, c) = calibrate_point(&g, lambda, config.budget, config.kappa_samples, derive_seed(base, &[0]))?;
        push_calibration(&mut cal, m, lambda, &kappa, &c);
        let p = c.p_c_hat.value;
        let v = g.vertex_count() as f64;
        let r = (config.delta * v.cbrt()).round().max(1.0) as u32;
        let rows = replicates(derive_seed(base, &[1]), config.seeds, |s| {
            let sample = PercolationSample::new(g.clone(), s);
            let mut per_eps = Vec::new();
            for &eps in &config.eps {
                let m_max = (eps * config.delta.powf(2.5) * v.powf(2.0 / 3.0)).ceil().max(1.0) as usize;
                per_eps.push((eps, m_max, long_thin_scan(&sample, p, r, m_max, config.vertex_cap, derive_seed(s, &[1]))?));
            }
            let stats = diameters(&sample, p, DiameterOptions::default())?;
            Ok((per_eps, tail_and_l4_stats(&stats, config.top_k)))
        })?;
        for (i, (per_eps, tail)) in rows.iter().enumerate() {
            for (eps, m_max, s) in per_eps {
                scan.push(vec![
                    m.to_string(),
                    num(lambda),
                    i.to_string(),
                    num(*eps),
                    r.to_string(),
                    m_max.to_string(),
                    s.count.to_string(),
                    s.examined.to_string(),
                    num(s.count as f64 / s.examined as f64),
                ]);
            }
            tails.push(vec![
                m.to_string(),
                num(lambda),
                i.to_string(),
                num(tail.size_tail),
                num(tail.diam_tail),
                tail.bounded_terms.to_string(),
            ]);
        }
    }
    out.tables.extend([cal, scan, tails]);
    Ok(())
}

/// Regularity conditions of the retained weight vector and girth of the full
/// component graph.
fn conditions_report(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let mut win = window_table();
    let mut t = Table::new(
        "conditions",
        &[
            "m",
            "lambda",
            "replicate",
            "sigma3_over_sigma2_cubed",
            "q_minus_inv_sigma2",
            "max_w_over_sigma2",
            "max_w_over_sigma2_pow",
            "sigma2_pow_r0_over_min_w",
            "girth",
            "girth_scaled",
            "qualifying",
        ],
    );
    for (m, lambda) in cells(config) {
        let base = cell_seed(config, m, lambda);
        let cw = calibrate_window(m, lambda, config.budget, config.kappa_samples, derive_seed(base, &[0]))?;
        let w = cw.window.clone();
        push_window(&mut win, &w);
        let g = TransitiveGraph::hypercube(m)?;
        let v = g.vertex_count();
        let rows = replicates(derive_seed(base, &[1]), config.seeds, |s| {
            let sample = PercolationSample::new(g.clone(), s);
            let wc = extract_weighted_components(&sample, &w)?;
            let report = check_conditions(&wc.weight_vector(w.q_lambda)?, DEFAULT_ETA0, DEFAULT_R0)?;
            let (full, _) = full_component_graph(&sample, w.p_s, w.p_c_prime)?;
            Ok((report, girth_scan(&full, v, config.tau)))
        })?;
        let scale = w.chi_ps_hat.value / (v as f64).cbrt();
        for (i, (c, gr)) in rows.iter().enumerate() {
            let (girth, scaled) = match gr.girth {
                Some(x) => (x.to_string(), num(x as f64 * scale)),
                None => ("inf".to_string(), "inf".to_string()),
            };
            t.push(vec![
                m.to_string(),
                num(lambda),
                i.to_string(),
                num(c.sigma3_over_sigma2_cubed),
                num(c.q_minus_inv_sigma2),
                num(c.max_w_over_sigma2),
                num(c.max_w_over_sigma2_pow),
                num(c.sigma2_pow_r0_over_min_w),
                girth,
                scaled,
                gr.qualifying.to_string(),
            ]);
        }
    }
    out.tables.extend([win, t]);
    Ok(())
}

/// Runs the named experiment without touching the disk.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut out = ExperimentOutput::default();
    match config.experiment.as_str() {
        "sizes-vs-er" => sizes_vs_er(config, &mut out)?,
        "sizes-vs-brownian" => sizes_vs_brownian(config, &mut out)?,
        "mult-vs-sprinkled" => mult_vs_sprinkled(config, &mut out)?,
        "metric-comparison" => metric_comparison_exp(config, &mut out)?,
        "window-width" => window_width(config, &mut out)?,
        "tightness-scan" => tightness_scan(config, &mut out)?,
        "conditions-report" => conditions_report(config, &mut out)?,
        "noop" => {}
        other => bail!("unknown experiment {other:?}; known: {}", EXPERIMENTS.join(", ")),
    }
    Ok(out)
}

/// Runs the experiment and writes its bundle to `config.out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let out = run(config)?;
    write_bundle(config, &out, &config.out_dir, start.elapsed().as_secs_f64())
}
