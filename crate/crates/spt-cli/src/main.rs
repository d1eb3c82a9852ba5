//! Command-line experiments for robust growth-optimal portfolios.
//!
//! Every command is a pure function of its configuration and seed: reruns
//! produce bit-identical outputs, and inner Monte Carlo parallelism never
//! affects results.

mod output;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use output::Meta;
use spt::model::{self, Model, Preset};
use spt::portfolio::{self, GeneratedPortfolio, WeightRule};
use spt::sim;
use spt::simplex::SimplexPoint;
use spt::{exec, qp};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "spt",
    about = "Robust growth-optimal portfolios on the market-weight simplex",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Model specification file (JSON)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Master seed for all randomness
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for Monte Carlo inner loops (0 = default)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output format for report-style commands
    #[arg(long, default_value = "json", value_parser = ["csv", "json"])]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate portfolio weights on a grid (d = 2) or a sample set
    Weights {
        #[command(flatten)]
        common: Common,
        /// Grid points for two-asset models
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Sample points for higher-dimensional models
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Portfolios to tabulate (comma separated:
        /// market,unconstrained,two-asset,qp:<bundle.json>)
        #[arg(long, default_value = "market,unconstrained")]
        portfolio: String,
    },
    /// Closed-form and Monte Carlo growth rate of the unconstrained optimum
    Lambda {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo samples
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
    },
    /// Assemble and solve the concave-mixture quadratic program
    Qp {
        #[command(flatten)]
        common: Common,
        /// Number of candidate functions in the family
        #[arg(long, default_value_t = 25)]
        m_funcs: usize,
        /// Hyperplanes per candidate function
        #[arg(long, default_value_t = 100)]
        k_planes: usize,
        /// Monte Carlo samples for the assembly
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Log-uniform scale span for the family (1 = normalized planes)
        #[arg(long, default_value_t = 1.0)]
        scale_span: f64,
        /// Frank-Wolfe gap target
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Iteration cap for the projected-gradient solver
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        /// Samples for the final growth-rate estimate
        #[arg(long, default_value_t = 100_000)]
        est_n: usize,
    },
    /// Simulate one market path and the wealth of selected portfolios
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Time step
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Horizon
        #[arg(long, default_value_t = 100.0)]
        t: f64,
        /// Record every n-th step
        #[arg(long, default_value_t = 100)]
        stride: usize,
        /// Portfolios (comma separated:
        /// market,unconstrained,two-asset,qp:<bundle.json>)
        #[arg(long, default_value = "market,unconstrained")]
        portfolios: String,
        /// Initial weights (comma separated; default barycenter)
        #[arg(long)]
        x0: Option<String>,
        /// Use the explicit factor noise (volatility-stabilized preset only)
        #[arg(long, default_value_t = false)]
        factor_noise: bool,
    },
    /// Capital distribution curves of ranked Dirichlet draws
    Capcurve {
        #[command(flatten)]
        common: Common,
        /// Dirichlet parameters (comma separated)
        #[arg(long, default_value = "0.5,1,2")]
        a: String,
        /// Market sizes (comma separated)
        #[arg(long, default_value = "500,5000")]
        d: String,
        /// Draws per curve
        #[arg(long, default_value_t = 1000)]
        n_draws: usize,
    },
    /// Structural and sampled model diagnostics
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Samples for the integral checks
        #[arg(long, default_value_t = 20_000)]
        n: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<spt::Error>()
                .map(|e| match e {
                    spt::Error::NumericalError(_) | spt::Error::BoundaryError(_) => 3u8,
                    _ => 2u8,
                })
                .unwrap_or(2);
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Weights {
            common,
            grid,
            samples,
            portfolio,
        } => cmd_weights(common, grid, samples, &portfolio),
        Command::Lambda { common, n } => cmd_lambda(common, n),
        Command::Qp {
            common,
            m_funcs,
            k_planes,
            n,
            scale_span,
            tol,
            max_iter,
            est_n,
        } => cmd_qp(
            common, m_funcs, k_planes, n, scale_span, tol, max_iter, est_n,
        ),
        Command::Simulate {
            common,
            dt,
            t,
            stride,
            portfolios,
            x0,
            factor_noise,
        } => cmd_simulate(
            common,
            dt,
            t,
            stride,
            &portfolios,
            x0.as_deref(),
            factor_noise,
        ),
        Command::Capcurve {
            common,
            a,
            d,
            n_draws,
        } => cmd_capcurve(common, &a, &d, n_draws),
        Command::Diagnose { common, n } => cmd_diagnose(common, n),
    }
}

/// Loads the model file; the text also feeds the config hash.
fn load_model(common: &Common) -> Result<(Model, String)> {
    let path = common
        .model
        .as_ref()
        .ok_or_else(|| anyhow!(spt::Error::InvalidParameter("--model is required".into())))?;
    if !path.exists() {
        bail!(spt::Error::InvalidParameter(format!(
            "model file {path:?} does not exist"
        )));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path:?}"))?;
    let model = model::model_from_json(&text)?;
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }
    Ok((model, text))
}

fn setup(common: &Common) -> Result<()> {
    exec::configure_threads(common.threads)?;
    Ok(())
}

fn parse_portfolios(spec_list: &str, m: &Model) -> Result<Vec<(String, Box<dyn WeightRule>)>> {
    let mut out: Vec<(String, Box<dyn WeightRule>)> = Vec::new();
    for raw in spec_list.split(',').filter(|s| !s.is_empty()) {
        let name = raw.trim();
        let (label, rule): (String, Box<dyn WeightRule>) = if name == "market" {
            ("market".into(), Box::new(GeneratedPortfolio::market()))
        } else if name == "unconstrained" {
            (
                "unconstrained".into(),
                Box::new(portfolio::unconstrained_optimum(m)),
            )
        } else if name == "two-asset" {
            if m.dim() != 2 {
                bail!(spt::Error::InvalidParameter(
                    "the two-asset portfolio requires a two-asset model".into()
                ));
            }
            (
                "two-asset".into(),
                Box::new(portfolio::solve_two_asset_long_only(m)?),
            )
        } else if let Some(path) = name.strip_prefix("qp:") {
            let text = std::fs::read_to_string(Path::new(path))
                .with_context(|| format!("reading bundle {path}"))?;
            let doc: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| spt::Error::InvalidParameter(format!("bundle {path}: {e}")))?;
            let bundle: qp::QpBundle =
                serde_json::from_value(doc.get("result").cloned().unwrap_or(doc))
                    .map_err(|e| spt::Error::InvalidParameter(format!("bundle {path}: {e}")))?;
            let n_prev = out.iter().filter(|(l, _)| l.starts_with("qp")).count();
            let label = if n_prev == 0 {
                "qp".to_string()
            } else {
                format!("qp{}", n_prev + 1)
            };
            (label, Box::new(bundle.portfolio(m)?.named("qp")))
        } else {
            bail!(spt::Error::InvalidParameter(format!(
                "unknown portfolio \"{name}\" (expected market, unconstrained, two-asset or qp:<bundle>)"
            )));
        };
        out.push((sanitize(&label), rule));
    }
    if out.is_empty() {
        bail!(spt::Error::InvalidParameter(
            "no portfolios requested".into()
        ));
    }
    Ok(out)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_weights(common: Common, grid: usize, samples: usize, portfolio_list: &str) -> Result<()> {
    setup(&common)?;
    let (m, model_text) = load_model(&common)?;
    if grid == 0 || samples == 0 {
        bail!(spt::Error::InvalidParameter(
            "grid and samples must be positive".into()
        ));
    }
    let meta = Meta::new(
        "weights",
        &format!("{model_text}|grid={grid}|samples={samples}|portfolios={portfolio_list}"),
        common.seed,
    );
    let points: Vec<SimplexPoint> = if m.dim() == 2 {
        (0..grid)
            .map(|k| {
                let x = (k + 1) as f64 / (grid + 1) as f64;
                SimplexPoint::new(vec![x, 1.0 - x]).expect("interior grid")
            })
            .collect()
    } else {
        spt::simplex::sample_dirichlet(&vec![1.0; m.dim()], samples, common.seed)?
    };
    let d = m.dim();
    let mut columns: Vec<String> = (1..=d).map(|i| format!("x^{i}")).collect();
    columns.extend((1..=d).map(|i| format!("pi^{i}")));
    for (name, rule) in parse_portfolios(portfolio_list, &m)? {
        let path = output::write_csv(
            &common.out,
            &format!("weights_{name}.csv"),
            &meta,
            &columns,
            points.iter().map(|x| {
                let mut row = x.coords().to_vec();
                row.extend(rule.weights(x));
                row
            }),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_lambda(common: Common, n: usize) -> Result<()> {
    setup(&common)?;
    let (m, model_text) = load_model(&common)?;
    let meta = Meta::new("lambda", &format!("{model_text}|n={n}"), common.seed);
    let gp = portfolio::unconstrained_optimum(&m);
    let mut report = portfolio::lambda_mc_generated(&m, &gp, n, common.seed)?;
    if let Some(Preset::Dirichlet(p)) = &m.preset {
        if let Ok(cf) = portfolio::lambda_dirichlet_closed_form(p) {
            report = report.with_closed_form(cf);
        }
    }
    if common.format == "csv" {
        let columns = vec![
            "lambda_mc".to_string(),
            "stderr".to_string(),
            "lambda_closed_form".to_string(),
        ];
        let row = vec![
            report.lambda_mc.value,
            report.lambda_mc.stderr,
            report.lambda_closed_form.unwrap_or(f64::NAN),
        ];
        let path = output::write_csv(
            &common.out,
            "lambda.csv",
            &meta,
            &columns,
            std::iter::once(row),
        )?;
        println!("wrote {}", path.display());
    } else {
        let payload = serde_json::json!({
            "lambda_mc": report.lambda_mc,
            "lambda_closed_form": report.lambda_closed_form,
            "consistent_with_closed_form": report.consistent_with_closed_form(),
            "ibp_estimate": report.ibp_estimate,
            "method": report.method,
            "high_variance": report.lambda_mc.high_variance(),
        });
        let path = output::write_json(&common.out, "lambda.json", &meta, &payload)?;
        println!("wrote {}", path.display());
    }
    println!(
        "lambda_mc = {} +- {}{}",
        report.lambda_mc.value,
        report.lambda_mc.stderr,
        report
            .lambda_closed_form
            .map(|v| format!(", closed form {v}"))
            .unwrap_or_default()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_qp(
    common: Common,
    m_funcs: usize,
    k_planes: usize,
    n: usize,
    scale_span: f64,
    tol: f64,
    max_iter: usize,
    est_n: usize,
) -> Result<()> {
    setup(&common)?;
    let (m, model_text) = load_model(&common)?;
    let meta = Meta::new(
        "qp",
        &format!(
            "{model_text}|M={m_funcs}|K={k_planes}|N={n}|span={scale_span}|tol={tol}|max_iter={max_iter}|est_n={est_n}"
        ),
        common.seed,
    );
    let family = qp::generate_family_scaled(m_funcs, k_planes, m.dim(), common.seed, scale_span)?;
    let problem = qp::assemble_qp(&m, &family, n, common.seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let solution = qp::solve_qp(&problem, Some(tol), Some(max_iter))?;
    if !solution.converged {
        eprintln!(
            "warning: solver stopped at gap {} after {} iterations",
            solution.fw_gap, solution.iterations
        );
    }
    let gp = qp::qp_portfolio(&m, &family, &solution)?;
    let lambda_e = qp::lambda_e_estimate(&m, &gp, est_n, common.seed ^ 0xdead_beef)?;
    let nf = family.n_funcs();
    let bundle = qp::QpBundle {
        d: m.dim(),
        m_funcs,
        k_planes,
        n_samples: n,
        family_seed: common.seed,
        assembly_seed: common.seed ^ 0x9e37_79b9_7f4a_7c15,
        family,
        q: (0..nf)
            .map(|i| (0..nf).map(|j| problem.q[(i, j)]).collect())
            .collect(),
        r: problem.r.iter().cloned().collect(),
        solution: solution.clone(),
        mean_ell_c_ell: problem.mean_ell_c_ell,
        half_mean_ell_c_ell: 0.5 * problem.mean_ell_c_ell.value,
        lambda_e_from_objective: solution.lambda_from_objective(),
        lambda_e: lambda_e.lambda_mc,
    };
    let path = output::write_json(&common.out, "qp_bundle.json", &meta, &bundle)?;
    println!("wrote {}", path.display());

    // weight curve for plotting
    let d = m.dim();
    let mut columns: Vec<String> = (1..=d).map(|i| format!("x^{i}")).collect();
    columns.extend((1..=d).map(|i| format!("pi^{i}")));
    let points: Vec<SimplexPoint> = if d == 2 {
        (0..199)
            .map(|k| {
                let x = (k + 1) as f64 / 200.0;
                SimplexPoint::new(vec![x, 1.0 - x]).expect("interior grid")
            })
            .collect()
    } else {
        spt::simplex::sample_dirichlet(&vec![1.0; d], 200, common.seed)?
    };
    let path = output::write_csv(
        &common.out,
        "qp_weights.csv",
        &meta,
        &columns,
        points.iter().map(|x| {
            let mut row = x.coords().to_vec();
            row.extend(gp.weights(x));
            row
        }),
    )?;
    println!("wrote {}", path.display());
    println!(
        "lambda_E = {} +- {} (objective route {}), converged = {}",
        bundle.lambda_e.value,
        bundle.lambda_e.stderr,
        bundle.lambda_e_from_objective,
        solution.converged
    );
    Ok(())
}

fn cmd_simulate(
    common: Common,
    dt: f64,
    t: f64,
    stride: usize,
    portfolio_list: &str,
    x0: Option<&str>,
    factor_noise: bool,
) -> Result<()> {
    setup(&common)?;
    let (m, model_text) = load_model(&common)?;
    let meta = Meta::new(
        "simulate",
        &format!("{model_text}|dt={dt}|t={t}|stride={stride}|portfolios={portfolio_list}|x0={x0:?}|factor_noise={factor_noise}"),
        common.seed,
    );
    let x0 = match x0 {
        None => SimplexPoint::barycenter(m.dim()),
        Some(raw) => {
            let coords: Vec<f64> = raw
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        anyhow!(spt::Error::InvalidParameter(format!(
                            "x0 entry \"{v}\" is not a number"
                        )))
                    })
                })
                .collect::<Result<_>>()?;
            SimplexPoint::new(coords)?
        }
    };
    let portfolios = parse_portfolios(portfolio_list, &m)?;
    let rules: Vec<&dyn WeightRule> = portfolios.iter().map(|(_, r)| r.as_ref()).collect();
    let mut cfg = sim::SimConfig::new(dt, t, common.seed).with_stride(stride);
    if factor_noise {
        cfg = cfg.with_noise(sim::NoiseModel::VolStabFactor);
    }
    let (path, wealth) = sim::simulate_with_wealth(&m, &x0, &cfg, &rules)?;

    let d = m.dim();
    let mut columns = vec!["time".to_string()];
    columns.extend((1..=d).map(|i| format!("x^{i}")));
    for (name, _) in &portfolios {
        columns.push(format!("log_V_{name}"));
    }
    // a zero horizon produces a header-only table
    let n_rows = if path.n_steps == 0 {
        0
    } else {
        path.times.len()
    };
    let file = output::write_csv(
        &common.out,
        "path.csv",
        &meta,
        &columns,
        (0..n_rows).map(|k| {
            let mut row = vec![path.times[k]];
            row.extend(path.states[k].coords().iter().cloned());
            for w in &wealth {
                row.push(w.log_v[k]);
            }
            row
        }),
    )?;
    println!("wrote {}", file.display());

    let growth: Vec<serde_json::Value> = wealth
        .iter()
        .zip(&portfolios)
        .map(|(w, (name, _))| {
            serde_json::json!({
                "portfolio": name,
                "growth": w.growth,
                "growth_stderr": w.growth_stderr,
                "guard_trips": w.guard_trips,
                "step_size_warning": w.step_size_warning(),
            })
        })
        .collect();
    let payload = serde_json::json!({
        "dt": dt,
        "t_max": t,
        "n_steps": path.n_steps,
        "boundary_hits": path.boundary_hits,
        "growth": growth,
    });
    let file = output::write_json(&common.out, "path_meta.json", &meta, &payload)?;
    println!("wrote {}", file.display());
    for (w, (name, _)) in wealth.iter().zip(&portfolios) {
        println!(
            "{name}: growth {} +- {}{}",
            w.growth,
            w.growth_stderr,
            if w.step_size_warning() {
                " (step-size warning: guard tripped on more than 0.1% of steps)"
            } else {
                ""
            }
        );
    }
    Ok(())
}

fn cmd_capcurve(common: Common, a_list: &str, d_list: &str, n_draws: usize) -> Result<()> {
    setup(&common)?;
    let parse_list = |raw: &str, key: &str| -> Result<Vec<f64>> {
        raw.split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| {
                    anyhow!(spt::Error::InvalidParameter(format!(
                        "{key} entry \"{v}\" is not a number"
                    )))
                })
            })
            .collect()
    };
    let alphas = parse_list(a_list, "a")?;
    let dims = parse_list(d_list, "d")?;
    let meta = Meta::new(
        "capcurve",
        &format!("a={a_list}|d={d_list}|n_draws={n_draws}"),
        common.seed,
    );
    let columns = vec![
        "rank".to_string(),
        "mean".to_string(),
        "q05".to_string(),
        "q50".to_string(),
        "q95".to_string(),
    ];
    for &alpha in &alphas {
        for &dim in &dims {
            let d = dim as usize;
            let curve = sim::capital_distribution_curve(alpha, d, n_draws, common.seed)?;
            let path = output::write_csv(
                &common.out,
                &format!("capcurve_a{alpha}_d{d}.csv"),
                &meta,
                &columns,
                (0..d).map(|k| {
                    vec![
                        (k + 1) as f64,
                        curve.mean[k],
                        curve.q05[k],
                        curve.q50[k],
                        curve.q95[k],
                    ]
                }),
            )?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_diagnose(common: Common, n: usize) -> Result<()> {
    setup(&common)?;
    let (m, model_text) = load_model(&common)?;
    let meta = Meta::new("diagnose", &format!("{model_text}|n={n}"), common.seed);
    let graph = model::check_graph_connectivity(&m, &SimplexPoint::barycenter(m.dim()));
    let report = model::assumption_diagnostics(&m, n, common.seed)?;
    let payload = serde_json::json!({
        "graph": graph,
        "assumptions": report,
    });
    let path = output::write_json(&common.out, "diagnose.json", &meta, &payload)?;
    println!("wrote {}", path.display());
    println!(
        "graph connected: {}; passes: {}{}",
        graph.connected,
        report.passes,
        if report.condition_warnings.is_empty() {
            String::new()
        } else {
            format!("; violated: {}", report.condition_warnings.join("; "))
        }
    );
    Ok(())
}
