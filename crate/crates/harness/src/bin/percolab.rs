use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use percolab::config::ExperimentConfig;
use percolab::experiments::run_experiment;
use percolab::output::{num, Table};
use percolab::pipeline::{calibrate_point, calibrate_window, coupled_pair, replicates};
use percolab_core::calibration::{derive_window, CalibrationOptions, calibrate_pc, WithCi};
use percolab_core::component_graphs::{
    all_deltas, bad_pair_count, connection_matrices, extract_weighted_components, full_component_graph, girth_scan,
    metric_comparison, PairInput,
};
use percolab_core::limit_oracle::{default_horizon, kappa_brownian, kappa_er, DEFAULT_STEP};
use percolab_core::mmspace::{ghp_bruteforce, gp_distance_matrix, hausdorff, parse_space, prokhorov, DeficitMethod, FiniteMMSpace};
use percolab_core::multiplicative::{sample_direct, sample_exploration, MultPartition, WeightVector};
use percolab_core::percolation::{diameters, percolate, tail_and_l4_stats, DiameterOptions, PercolationSample};
use percolab_core::rng::derive_seed;
use percolab_core::substrate::{mixing_profile, KernelRepr, TransitiveGraph};

#[derive(Parser)]
#[command(name = "percolab", version, about = "Critical percolation on the hypercube and its scaling limits")]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uniform-mixing profile of the non-backtracking walk.
    Nbrw {
        #[arg(long)]
        m: usize,
        /// Report only this step.
        #[arg(long)]
        t: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        xi: f64,
        #[arg(long, default_value_t = 200)]
        tmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Component sizes, diameters or l4 tails of H_p.
    Percolate {
        #[arg(long)]
        m: usize,
        #[arg(long, conflicts_with = "lambda")]
        p: Option<f64>,
        /// Calibrate p_c(lambda) first.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, value_enum, default_value_t = Stats::Sizes)]
        stats: Stats,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// kappa(lambda) from Brownian excursions or from Erdos-Renyi.
    Oracle {
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, value_enum, default_value_t = OracleMode::Brownian)]
        mode: OracleMode,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        h: f64,
        #[arg(long, default_value_t = 300)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate p_c(lambda) and derive the window parameters.
    Calibrate {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        lambda: f64,
        /// A number, or `auto` for the Erdos-Renyi value at n = 2^m.
        #[arg(long, default_value = "auto")]
        kappa: String,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long, default_value_t = 400)]
        kappa_samples: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Sample the multiplicative graph.
    Multgraph {
        /// A file of whitespace-separated weights, or `synthetic:N[:W]` for N
        /// equal weights W (default N^{-2/3}).
        #[arg(long)]
        weights: String,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, value_enum, default_value_t = MultMode::Direct)]
        mode: MultMode,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Component-graph quantities over a calibrated window.
    Compgraph {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, value_enum)]
        emit: Emit,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long, default_value_t = 400)]
        kappa_samples: usize,
        #[arg(long, default_value_t = 200)]
        n_mc: usize,
        #[arg(long, default_value_t = 100)]
        n_pairs: usize,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distances between finite metric measure spaces.
    Mmspace {
        /// Space file; give two for the two-space operations.
        #[arg(long = "in", required = true, num_args = 1..=2)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        op: MmOp,
        #[arg(long, default_value_t = 4)]
        points: usize,
        /// Matrices drawn by `gp-matrix`.
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a registered experiment.
    Experiment {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stats {
    Sizes,
    Diam,
    L4,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleMode {
    Brownian,
    Er,
}

#[derive(Clone, Copy, ValueEnum)]
enum MultMode {
    Direct,
    Exploration,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Deltas,
    Discrepancy,
    Matrices,
    Metric,
    Girth,
    Badpairs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MmOp {
    Hausdorff,
    Prokhorov,
    GpMatrix,
    Ghp,
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => table.write_csv(p),
        None => {
            print!("{}", String::from_utf8(table.to_csv()?)?);
            Ok(())
        }
    }
}

fn nbrw(m: usize, t: Option<usize>, xi: f64, tmax: usize) -> Result<Table> {
    let g = TransitiveGraph::hypercube(m)?;
    let rows = mixing_profile(&g, xi, t.map_or(tmax, |t| t.max(tmax)), KernelRepr::Auto)?;
    let mut table = Table::new("nbrw", &["t", "max_violation", "mixed"]);
    for r in rows.iter().filter(|r| t.is_none_or(|t| r.t == t)) {
        table.push(vec![r.t.to_string(), num(r.max_violation), r.mixed.to_string()]);
    }
    Ok(table)
}

fn percolate_cmd(seed: u64, m: usize, p: Option<f64>, lambda: Option<f64>, seeds: usize, stats: Stats, budget: usize) -> Result<Table> {
    let g = TransitiveGraph::hypercube(m)?;
    let p = match (p, lambda) {
        (Some(p), _) => p,
        (None, Some(l)) => calibrate_point(&g, l, budget, 400, derive_seed(seed, &[0xca]))?.1.p_c_hat.value,
        (None, None) => bail!("give --p or --lambda"),
    };
    let mut table = match stats {
        Stats::Sizes => Table::new("percolate", &["seed", "rank", "size"]),
        Stats::Diam => Table::new("percolate", &["seed", "rank", "size", "diameter"]),
        Stats::L4 => Table::new("percolate", &["seed", "size_tail", "diam_tail", "bounded_terms"]),
    };
    let results = replicates(seed, seeds, |s| {
        let sample = PercolationSample::new(g.clone(), s);
        Ok(match stats {
            Stats::Sizes => (s, percolate(&sample, p)?),
            _ => (s, diameters(&sample, p, DiameterOptions::default())?),
        })
    })?;
    for (s, cs) in results {
        match stats {
            Stats::Sizes => {
                for (r, size) in cs.sizes.iter().enumerate() {
                    table.push(vec![s.to_string(), (r + 1).to_string(), size.to_string()]);
                }
            }
            Stats::Diam => {
                let d = cs.diameters.as_ref().expect("diameters requested");
                for (r, (size, dm)) in cs.sizes.iter().zip(d).enumerate() {
                    table.push(vec![s.to_string(), (r + 1).to_string(), size.to_string(), dm.value.to_string()]);
                }
            }
            Stats::L4 => {
                let t = tail_and_l4_stats(&cs, 5);
                table.push(vec![s.to_string(), num(t.size_tail), num(t.diam_tail), t.bounded_terms.to_string()]);
            }
        }
    }
    Ok(table)
}

fn oracle(seed: u64, lambda: f64, mode: OracleMode, n: usize, horizon: Option<f64>, h: f64, samples: usize) -> Result<Table> {
    let mut t = Table::new("oracle", &["mode", "lambda", "kappa", "se", "samples", "discarded"]);
    match mode {
        OracleMode::Brownian => {
            let k = kappa_brownian(lambda, horizon.unwrap_or_else(|| default_horizon(lambda)), h, samples, seed)?;
            t.push(vec!["brownian".into(), num(lambda), num(k.estimate.mean), num(k.estimate.se), k.n_samples.to_string(), k.discarded.to_string()]);
        }
        OracleMode::Er => {
            let k = kappa_er(lambda, n, samples, seed)?;
            t.push(vec!["er".into(), num(lambda), num(k.mean), num(k.se), samples.to_string(), "0".into()]);
        }
    }
    Ok(t)
}

fn calibrate_cmd(seed: u64, m: usize, lambda: f64, kappa: &str, budget: usize, kappa_samples: usize) -> Result<String> {
    let window = if kappa == "auto" {
        calibrate_window(m, lambda, budget, kappa_samples, seed)?.window
    } else {
        let k: f64 = kappa.parse().map_err(|e| anyhow!("--kappa: expected a number or auto: {e}"))?;
        let g = TransitiveGraph::hypercube(m)?;
        let c = calibrate_pc(&g, lambda, k, CalibrationOptions::new(budget, derive_seed(seed, &[2])))?;
        derive_window(&g, lambda, c.p_c_hat, WithCi::exact(k), None, budget, derive_seed(seed, &[3]))?
    };
    Ok(serde_json::to_string_pretty(&window)?)
}

fn read_weights(spec: &str) -> Result<Vec<f64>> {
    if let Some(rest) = spec.strip_prefix("synthetic:") {
        let mut parts = rest.split(':');
        let n: usize = parts.next().unwrap_or("").parse().context("synthetic:N[:W] needs an integer N")?;
        let w = match parts.next() {
            Some(w) => w.parse().context("synthetic weight")?,
            None => (n as f64).powf(-2.0 / 3.0),
        };
        return Ok(vec![w; n]);
    }
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?;
    text.split_whitespace().map(|s| s.parse::<f64>().with_context(|| format!("bad weight {s:?}"))).collect()
}

fn multgraph(seed: u64, weights: &str, q: f64, mode: MultMode, samples: usize) -> Result<Table> {
    let wv = WeightVector::new(read_weights(weights)?, q)?;
    let mut t = Table::new("multgraph", &["sample", "rank", "weight", "size"]);
    let parts: Vec<MultPartition> = replicates(seed, samples, |s| {
        Ok(match mode {
            MultMode::Direct => sample_direct(&wv, s),
            MultMode::Exploration => sample_exploration(&wv, s)?.components().0,
        })
    })?;
    for (i, p) in parts.iter().enumerate() {
        for (r, c) in p.classes.iter().enumerate() {
            t.push(vec![i.to_string(), (r + 1).to_string(), num(c.weight), c.members.len().to_string()]);
        }
    }
    Ok(t)
}

#[allow(clippy::too_many_arguments)]
fn compgraph(
    seed: u64,
    m: usize,
    lambda: f64,
    seeds: usize,
    what: Emit,
    budget: usize,
    kappa_samples: usize,
    n_mc: usize,
    n_pairs: usize,
    tau: f64,
) -> Result<Table> {
    let w = calibrate_window(m, lambda, budget, kappa_samples, derive_seed(seed, &[0xca]))?.window;
    let g = TransitiveGraph::hypercube(m)?;
    let v = g.vertex_count();
    let header: &[&str] = match what {
        Emit::Deltas => &["seed", "a", "b", "delta"],
        Emit::Discrepancy => &["seed", "retained", "excluded_mass", "sigma2_ratio", "mult_edges", "sprinkled_edges", "discrepancy"],
        Emit::Matrices => &["seed", "components", "frob_mult", "frob_sprinkled", "frob_xi", "frob_neq", "bound"],
        Emit::Metric => &["seed", "pair", "d_cube", "d_comp", "outside_vstar"],
        Emit::Girth => &["seed", "girth", "girth_scaled", "qualifying"],
        Emit::Badpairs => &["seed", "bad_pairs", "scaled"],
    };
    let mut t = Table::new("compgraph", header);
    let rows = replicates(seed, seeds, |s| -> Result<Vec<Vec<String>>> {
        let sample = PercolationSample::new(g.clone(), s);
        let id = s.to_string();
        Ok(match what {
            Emit::Deltas => {
                let wc = extract_weighted_components(&sample, &w)?;
                all_deltas(&sample, &wc)
                    .into_iter()
                    .map(|(a, b, d)| vec![id.clone(), a.to_string(), b.to_string(), d.to_string()])
                    .collect()
            }
            Emit::Discrepancy => {
                let d = coupled_pair(&g, &w, s)?.0;
                vec![vec![
                    id,
                    d.retained.to_string(),
                    d.excluded_mass.to_string(),
                    num(d.sigma2_ratio),
                    d.mult_edges.to_string(),
                    d.sprinkled_edges.to_string(),
                    num(d.discrepancy),
                ]]
            }
            Emit::Matrices => {
                let wc = extract_weighted_components(&sample, &w)?;
                let input = PairInput::from_components(&sample, &wc, w.q_lambda);
                let cm = connection_matrices(&input, n_mc, derive_seed(s, &[1]))?;
                let (fm, fs, fx, fn_) = (cm.t_mult.frobenius(), cm.t_sprinkled.frobenius(), cm.xi.frobenius(), cm.t_neq.frobenius());
                vec![vec![id, wc.len().to_string(), num(fm), num(fs), num(fx), num(fn_), num(fx * (1.0 + fs) * (1.0 + fm))]]
            }
            Emit::Metric => {
                let wc = extract_weighted_components(&sample, &w)?;
                metric_comparison(&sample, &wc, w.chi_ps_hat.value, w.p_c_prime, 1, n_pairs, derive_seed(s, &[1]))?
                    .iter()
                    .enumerate()
                    .map(|(i, p)| vec![id.clone(), i.to_string(), num(p.d_cube), num(p.d_comp), p.outside_vstar.to_string()])
                    .collect()
            }
            Emit::Girth => {
                let (full, _) = full_component_graph(&sample, w.p_s, w.p_c_prime)?;
                let r = girth_scan(&full, v, tau);
                let scale = w.chi_ps_hat.value / (v as f64).cbrt();
                let (gi, gs) = r.girth.map_or(("inf".into(), "inf".into()), |x| (x.to_string(), num(x as f64 * scale)));
                vec![vec![id, gi, gs, r.qualifying.to_string()]]
            }
            Emit::Badpairs => {
                let wc = extract_weighted_components(&sample, &w)?;
                let (n, scaled) = bad_pair_count(&sample, &wc, w.p_c_prime)?;
                vec![vec![id, n.to_string(), num(scaled)]]
            }
        })
    })?;
    for r in rows.into_iter().flatten() {
        t.push(r);
    }
    Ok(t)
}

fn load_space(path: &Path) -> Result<FiniteMMSpace> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_space(&text)?)
}

/// Two files on the same metric: their distance matrices must agree.
fn same_metric(x: &FiniteMMSpace, y: &FiniteMMSpace) -> Result<()> {
    let k = x.len();
    if y.len() != k || (0..k).any(|i| (0..k).any(|j| x.distance(i, j) != y.distance(i, j))) {
        bail!("hausdorff and prokhorov need two mass vectors on one metric");
    }
    Ok(())
}

fn mmspace_cmd(seed: u64, inputs: &[PathBuf], op: MmOp, points: usize, samples: usize) -> Result<Table> {
    let spaces: Vec<FiniteMMSpace> = inputs.iter().map(|p| load_space(p)).collect::<Result<_>>()?;
    let pair = || -> Result<(&FiniteMMSpace, &FiniteMMSpace)> {
        match spaces.as_slice() {
            [x, y] => Ok((x, y)),
            _ => bail!("this operation needs two --in files"),
        }
    };
    Ok(match op {
        MmOp::Hausdorff => {
            let (x, y) = pair()?;
            same_metric(x, y)?;
            let support = |s: &FiniteMMSpace| (0..s.len()).filter(|&i| s.masses()[i] > 0.0).collect::<Vec<_>>();
            let mut t = Table::new("hausdorff", &["distance"]);
            t.push(vec![num(hausdorff(x, &support(x), &support(y))?)]);
            t
        }
        MmOp::Prokhorov => {
            let (x, y) = pair()?;
            same_metric(x, y)?;
            let mut t = Table::new("prokhorov", &["distance"]);
            t.push(vec![num(prokhorov(x, x.masses(), y.masses(), DeficitMethod::Auto)?)]);
            t
        }
        MmOp::Ghp => {
            let (x, y) = pair()?;
            let r = ghp_bruteforce(x, y)?;
            let mut t = Table::new("ghp", &["distance", "hausdorff_part", "prokhorov_part"]);
            t.push(vec![num(r.distance), num(r.hausdorff_part), num(r.prokhorov_part)]);
            t
        }
        MmOp::GpMatrix => {
            let x = &spaces[0];
            let mut header = vec!["sample".to_string()];
            for a in 0..points {
                for b in (a + 1)..points {
                    header.push(format!("d{a}{b}"));
                }
            }
            let mut t = Table {
                name: "gp".into(),
                header,
                rows: Vec::new(),
            };
            for s in 0..samples {
                let d = gp_distance_matrix(x, points, derive_seed(seed, &[s as u64]))?;
                let mut row = vec![s.to_string()];
                for a in 0..points {
                    for b in (a + 1)..points {
                        row.push(num(d[a * points + b]));
                    }
                }
                t.push(row);
            }
            t
        }
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let seed = cli.seed;
    match cli.command {
        Command::Nbrw { m, t, xi, tmax, out } => emit(&nbrw(m, t, xi, tmax)?, out.as_deref()),
        Command::Percolate {
            m,
            p,
            lambda,
            seeds,
            stats,
            budget,
            out,
        } => emit(&percolate_cmd(seed, m, p, lambda, seeds, stats, budget)?, out.as_deref()),
        Command::Oracle {
            lambda,
            mode,
            n,
            horizon,
            h,
            samples,
            out,
        } => emit(&oracle(seed, lambda, mode, n, horizon, h, samples)?, out.as_deref()),
        Command::Calibrate {
            m,
            lambda,
            kappa,
            budget,
            kappa_samples,
            json,
        } => {
            let s = calibrate_cmd(seed, m, lambda, &kappa, budget, kappa_samples)?;
            match json {
                Some(p) => std::fs::write(&p, s).with_context(|| format!("writing {}", p.display())),
                None => {
                    println!("{s}");
                    Ok(())
                }
            }
        }
        Command::Multgraph {
            weights,
            q,
            mode,
            samples,
            out,
        } => emit(&multgraph(seed, &weights, q, mode, samples)?, out.as_deref()),
        Command::Compgraph {
            m,
            lambda,
            seeds,
            emit: what,
            budget,
            kappa_samples,
            n_mc,
            n_pairs,
            tau,
            out,
        } => emit(
            &compgraph(seed, m, lambda, seeds, what, budget, kappa_samples, n_mc, n_pairs, tau)?,
            out.as_deref(),
        ),
        Command::Mmspace {
            inputs,
            op,
            points,
            samples,
            out,
        } => emit(&mmspace_cmd(seed, &inputs, op, points, samples)?, out.as_deref()),
        Command::Experiment { name, config, out } => {
            let mut c = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            c.experiment = name;
            if std::env::args().any(|a| a == "--seed" || a.starts_with("--seed=")) {
                c.seed = seed;
            }
            if let Some(o) = out {
                c.out_dir = o;
            }
            for p in run_experiment(&c)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}
