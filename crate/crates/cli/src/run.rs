//! Builds the model, engine and state for a config and executes its command.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use log::info;
use lr_ergo_core::certify::{certify_lr, localization_curve, NamedPair};
use lr_ergo_core::ergodic::{
    convergence_sweep, euler_scale_average, mean_square_with_error, moment_with_error,
    multi_ray_average, oscillatory_ray_average, spacelike_probe, structure_factor, SweepMode,
};
use lr_ergo_core::states::kms_residual;
use lr_ergo_core::{EvolutionEngine, Interaction, LocalOperator, Site, State, Torus};
use serde_json::Value;

use crate::config::{ray_spec, Command, ExperimentConfig, StateBlock};
use crate::output::{
    join, sha256_hex, write_manifest, write_report, Cell, Format, Report, RunManifest, Table,
};
use crate::RunError;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub format: Format,
    /// Worker threads; the number of available cores when `None`.
    pub workers: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub violation: Option<String>,
}

/// Model, dynamics, state and observables of one experiment.
pub struct Experiment {
    pub torus: Torus,
    pub phi: Interaction,
    pub engine: EvolutionEngine,
    pub state: State,
    pub ops: BTreeMap<String, LocalOperator>,
}

fn ctx(context: impl Into<String>) -> impl FnOnce(lr_ergo_core::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Core { context, source }
}

impl Experiment {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, RunError> {
        let torus = cfg.torus().map_err(ctx("lattice"))?;
        let phi = cfg
            .preset()
            .and_then(|p| p.expand(&torus, cfg.lattice.site_dim, cfg.model.lambda))
            .map_err(ctx("model"))?;
        let t0 = Instant::now();
        let engine = EvolutionEngine::from_interaction(&phi).map_err(ctx("diagonalization"))?;
        info!(
            "diagonalized dimension {} in {:.2?}",
            engine.dim(),
            t0.elapsed()
        );
        let volume = engine.volume().clone();
        let n = cfg.lattice.site_dim;
        let state = match &cfg.state {
            StateBlock::Tracial => State::tracial(volume, n),
            StateBlock::Gibbs { beta } => {
                State::gibbs(&engine, *beta).map_err(ctx("gibbs state"))?
            }
            StateBlock::Product { .. } => {
                let vectors = cfg.product_vectors().unwrap_or_default();
                State::product(volume, n, &vectors).map_err(ctx("product state"))?
            }
        };
        let ops = cfg.operators().map_err(ctx("observables"))?;
        Ok(Experiment {
            torus,
            phi,
            engine,
            state,
            ops,
        })
    }

    fn op(&self, name: &str) -> &LocalOperator {
        // names are resolved when the config is validated
        &self.ops[name]
    }
}

/// Validates the command name, runs it on a worker pool and writes every
/// output plus `manifest.json` into the output directory.
pub fn run(
    cfg: &ExperimentConfig,
    config_text: &str,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let start = Instant::now();
    if opts.workers == Some(0) {
        return Err(RunError::Config(crate::ConfigError::new(
            "--workers must be at least 1",
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Io {
            context: "starting worker pool".into(),
            source: std::io::Error::other(e),
        })?;
    let workers = pool.current_num_threads();
    info!("running {} on {workers} workers", cfg.command.name());
    let report = pool.install(|| {
        let exp = Experiment::build(cfg)?;
        execute(cfg, &exp)
    })?;
    let outputs = write_report(&opts.out_dir, cfg.command.name(), opts.format, &report)?;
    let manifest = RunManifest {
        tool: "lr-ergo".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cfg.command.name().into(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        format: opts.format,
        workers,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs,
    };
    write_manifest(&opts.out_dir, &manifest)?;
    Ok(RunOutcome {
        manifest,
        violation: report.violation,
    })
}

/// Runs the configured command without writing anything.
pub fn execute(cfg: &ExperimentConfig, exp: &Experiment) -> Result<Report, RunError> {
    let eng = &exp.engine;
    let s = &exp.state;
    let lambda = cfg.model.lambda;
    let mut report = Report::default();
    let name = cfg.command.name();
    match &cfg.command {
        Command::LrCertify(p) => {
            let pairs: Vec<NamedPair> = p
                .pairs
                .iter()
                .map(|(a, b)| NamedPair::new(a, exp.op(a).clone(), b, exp.op(b).clone()))
                .collect();
            let cert =
                certify_lr(eng, &exp.phi, lambda, &pairs, &p.times.values()).map_err(ctx(name))?;
            let mut t = Table::new(
                "lr_certificate",
                &[
                    "a",
                    "b",
                    "dist",
                    "t",
                    "empirical_norm",
                    "bound_rhs",
                    "satisfied",
                    "margin",
                    "boundary_affected",
                ],
            );
            for r in &cert.rows {
                t.push(vec![
                    r.a.as_str().into(),
                    r.b.as_str().into(),
                    r.dist.into(),
                    r.t.into(),
                    r.empirical_norm.into(),
                    r.bound_rhs.into(),
                    r.satisfied.into(),
                    r.margin.into(),
                    r.boundary_affected.into(),
                ]);
            }
            let violations = cert.violations();
            if let Some(first) = violations.first() {
                report.violation = Some(format!(
                    "{} non-boundary-affected rows violate the Lieb-Robinson bound (first: {} vs {} at t = {})",
                    violations.len(),
                    first.a,
                    first.b,
                    first.t
                ));
            }
            let mut doc = serde_json::to_value(&cert).expect("certificate serializes");
            doc["passed"] = cert.passed().into();
            doc["counted_rows"] = cert.counted_rows().into();
            doc["violations"] = violations.len().into();
            report.document = Some(("lr_certificate".into(), doc));
            report
                .text
                .push(("lr_certificate.txt".into(), cert.to_table()));
            report.tables.push(t);
        }
        Command::Localize(p) => {
            let v_lr = exp.phi.lr_velocity(lambda);
            let rep =
                localization_curve(eng, exp.op(&p.observable), p.t, &p.radii, p.c, lambda, v_lr)
                    .map_err(ctx(name))?;
            let mut t = Table::new(
                "localization",
                &[
                    "r",
                    "t",
                    "empirical_error",
                    "theoretical",
                    "c",
                    "region_size",
                ],
            );
            for r in &rep.rows {
                t.push(vec![
                    r.r.into(),
                    r.t.into(),
                    r.empirical_error.into(),
                    r.theoretical.into(),
                    r.c.into(),
                    r.region_size.into(),
                ]);
            }
            report.summary("lambda", lambda);
            report.summary("v_lr", v_lr);
            report.summary("nonincreasing", rep.is_nonincreasing(1e-12));
            report.tables.push(t);
        }
        Command::ErgodicSweep(p) => {
            let q = cfg.direction(&p.q).map_err(ctx(name))?;
            let mode = p.mode.clone().unwrap_or(SweepMode::Plain);
            let rows = convergence_sweep(
                s,
                exp.op(&p.a),
                exp.op(&p.b),
                &q,
                &p.v.values(),
                &p.horizons.values(),
                &mode,
                &p.quadrature.spec(),
                eng,
            )
            .map_err(ctx(name))?;
            let mut t = Table::new(
                "sweep",
                &[
                    "mode",
                    "v",
                    "T",
                    "value_re",
                    "value_im",
                    "reference_re",
                    "reference_im",
                    "abs_deviation",
                    "quad_error",
                    "wall_ms",
                ],
            );
            for r in rows {
                let mut row: Vec<Cell> = vec![r.mode.into(), r.v.into(), r.horizon.into()];
                row.extend(Table::complex(r.value));
                row.extend(Table::complex(r.reference));
                row.extend([
                    r.abs_deviation.into(),
                    r.quad_error.into(),
                    r.wall_ms.into(),
                ]);
                t.push(row);
            }
            report.summary("mode", mode.label());
            report.tables.push(t);
        }
        Command::Oscillatory(p) => {
            let ray = ray_spec(cfg, &p.q, p.v)
                .and_then(|r| r.with_phase(p.k.clone(), p.f))
                .map_err(ctx(name))?;
            let mut t = Table::new(
                "oscillatory",
                &[
                    "v",
                    "k",
                    "f",
                    "theta",
                    "T",
                    "value_re",
                    "value_im",
                    "unsubtracted_re",
                    "unsubtracted_im",
                    "quad_error",
                ],
            );
            for (i, horizon) in p.horizons.values().into_iter().enumerate() {
                let r = oscillatory_ray_average(
                    s,
                    exp.op(&p.a),
                    exp.op(&p.b),
                    &ray,
                    horizon,
                    &p.quadrature.spec(),
                    eng,
                )
                .map_err(ctx(format!("{name}: cell {i} (T = {horizon})")))?;
                let mut row = vec![
                    p.v.into(),
                    join(&p.k),
                    p.f.into(),
                    ray.theta().into(),
                    horizon.into(),
                ];
                row.extend(Table::complex(r.value));
                row.extend(Table::complex(r.unsubtracted));
                row.push(r.estimated_quadrature_error.into());
                t.push(row);
            }
            report.tables.push(t);
        }
        Command::Moments(p) => {
            let ray = ray_spec(cfg, &p.q, p.v).map_err(ctx(name))?;
            let mut t = Table::new(
                "moments",
                &["v", "T", "n", "value_re", "value_im", "quad_error"],
            );
            for (i, horizon) in p.horizons.values().into_iter().enumerate() {
                for &n in &p.n {
                    let (value, err) = moment_with_error(
                        s,
                        exp.op(&p.a),
                        &ray,
                        horizon,
                        n,
                        &p.quadrature.spec(),
                        eng,
                    )
                    .map_err(ctx(format!("{name}: cell {i} (T = {horizon}, n = {n})")))?;
                    let mut row = vec![p.v.into(), horizon.into(), n.into()];
                    row.extend(Table::complex(value));
                    row.push(err.into());
                    t.push(row);
                }
            }
            report.tables.push(t);
        }
        Command::MeanSquare(p) => {
            let ray = ray_spec(cfg, &p.q, p.v).map_err(ctx(name))?;
            let mut t = Table::new(
                "mean_square",
                &["v", "T", "T_b", "value_re", "value_im", "quad_error"],
            );
            for (i, horizon) in p.horizons.values().into_iter().enumerate() {
                let hb = p.horizon_b.unwrap_or(horizon);
                let (value, err) = mean_square_with_error(
                    s,
                    exp.op(&p.a),
                    exp.op(&p.b),
                    &ray,
                    horizon,
                    hb,
                    &p.quadrature.spec(),
                    eng,
                )
                .map_err(ctx(format!("{name}: cell {i} (T = {horizon})")))?;
                let mut row = vec![p.v.into(), horizon.into(), hb.into()];
                row.extend(Table::complex(value));
                row.push(err.into());
                t.push(row);
            }
            report.tables.push(t);
        }
        Command::MultiPoint(p) => {
            let ray = ray_spec(cfg, &p.q, p.v).map_err(ctx(name))?;
            let a: Vec<LocalOperator> = p.a.iter().map(|n| exp.op(n).clone()).collect();
            let b: Vec<LocalOperator> = p.b.iter().map(|n| exp.op(n).clone()).collect();
            let value = multi_ray_average(s, &a, &b, &ray, &p.horizons, &p.quadrature.spec(), eng)
                .map_err(ctx(name))?;
            let mut t = Table::new("multi_point", &["v", "T", "value_re", "value_im"]);
            let mut row = vec![p.v.into(), join(&p.horizons)];
            row.extend(Table::complex(value));
            t.push(row);
            report.tables.push(t);
        }
        Command::SpacelikeProbe(p) => {
            let n = Site::new(p.n.clone());
            let phase = p.k.as_deref().zip(p.f);
            let probe =
                spacelike_probe(s, exp.op(&p.a), exp.op(&p.b), &n, p.v, p.m_max, phase, eng)
                    .map_err(ctx(name))?;
            let mut t = Table::new(
                "spacelike",
                &[
                    "m",
                    "term_re",
                    "term_im",
                    "partial_mean_re",
                    "partial_mean_im",
                    "connected_term_re",
                    "connected_term_im",
                    "connected_mean_re",
                    "connected_mean_im",
                ],
            );
            for m in 0..probe.terms.len() {
                let mut row = vec![Cell::from(m + 1)];
                row.extend(Table::complex(probe.terms[m]));
                row.extend(Table::complex(probe.partial_means[m]));
                row.extend(Table::complex(probe.connected_terms[m]));
                row.extend(Table::complex(probe.connected_means[m]));
                t.push(row);
            }
            report.summary("v", Cell::F(p.v).text());
            report.tables.push(t);
        }
        Command::KmsCheck(p) => {
            let beta = p
                .beta
                .or(s.beta())
                .ok_or_else(|| RunError::Config(crate::ConfigError::new("kms-check needs beta")))?;
            let pairs: Vec<(String, String)> = match &p.pairs {
                Some(pairs) => pairs.clone(),
                None => exp
                    .ops
                    .keys()
                    .flat_map(|a| exp.ops.keys().map(move |b| (a.clone(), b.clone())))
                    .collect(),
            };
            let mut t = Table::new("kms", &["a", "b", "beta", "residual"]);
            let mut max: f64 = 0.0;
            for (a, b) in &pairs {
                let r = kms_residual(s, eng, exp.op(a), exp.op(b), beta)
                    .map_err(ctx(format!("{name}: pair ({a}, {b})")))?;
                max = max.max(r);
                t.push(vec![
                    a.as_str().into(),
                    b.as_str().into(),
                    beta.into(),
                    r.into(),
                ]);
            }
            let passed = max <= p.tolerance;
            if !passed {
                report.violation = Some(format!(
                    "max KMS residual {max:e} exceeds tolerance {:e}",
                    p.tolerance
                ));
            }
            report.summary("beta", beta);
            report.summary("max_residual", max);
            report.summary("tolerance", p.tolerance);
            report.summary("passed", passed);
            report.tables.push(t);
        }
        Command::Hydro(p) => {
            let (a, b) = (exp.op(&p.a), exp.op(&p.b));
            let mut t = Table::new(
                "euler",
                &[
                    "kappa",
                    "T",
                    "t_min",
                    "value_re",
                    "value_im",
                    "estimated_error",
                ],
            );
            for (i, kappa) in p.kappa.iter().enumerate() {
                let r = euler_scale_average(
                    s,
                    a,
                    b,
                    kappa,
                    p.horizon,
                    p.t_min,
                    &p.quadrature.spec(),
                    eng,
                )
                .map_err(ctx(format!("{name}: cell {i}")))?;
                let mut row = vec![join(kappa), r.horizon.into(), r.t_min.into()];
                row.extend(Table::complex(r.value));
                row.push(r.estimated_error.into());
                t.push(row);
            }
            report.tables.push(t);
            if let (Some(ks), Some(times)) = (&p.k, &p.times) {
                let mut sf = Table::new("structure_factor", &["k", "t", "value_re", "value_im"]);
                for k in ks {
                    for time in times.values() {
                        let v = structure_factor(s, a, b, k, time, eng)
                            .map_err(ctx(format!("{name}: S(k, t) at t = {time}")))?;
                        let mut row = vec![join(k), time.into()];
                        row.extend(Table::complex(v));
                        sf.push(row);
                    }
                }
                report.tables.push(sf);
            }
        }
    }
    report.summary("state", Value::from(s.label()));
    Ok(report)
}
