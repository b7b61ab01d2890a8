//! The experiment drivers behind `npde run`.

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::io::{save_fields, save_trajectory, state_csv, trajectory_csv, CsvTable};
use anyhow::Context;
use npde_core::adjoint::gradcheck;
use npde_core::bilinear::{
    absorb_nonlinearity, plan_rows, saturate_plan, steer_full, steer_velocity, ControlLaw,
    LinearRun, SteerConfig, TrigPoly, WaveContext,
};
use npde_core::grid::{Dim, Grid};
use npde_core::hermite::{free_evolution, wave_energy, HermiteBasis, HermiteState};
use npde_core::optimize::{default_initialization, train, TrainSample, TrainSetup};
use npde_core::parabolic::{energy_diagnostic, solve_forward, ParabolicProblem};
use npde_core::stencil::{
    assemble_kdelta_1d, assemble_kdelta_2d, consistency_order, dyadic_grids, CoefficientSlice,
    ConsistencyReport, OperatorForm, OperatorMatrix,
};
use npde_core::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Files and metrics produced by one run.
pub struct ResultBundle {
    pub metrics: Vec<(String, String)>,
    pub artifacts: Vec<String>,
}

impl ResultBundle {
    fn new() -> Self {
        ResultBundle { metrics: Vec::new(), artifacts: Vec::new() }
    }

    fn metric(&mut self, key: &str, value: impl std::fmt::Display) {
        self.metrics.push((key.to_string(), value.to_string()));
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<ResultBundle> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    match cfg.experiment {
        ExperimentKind::TrainParabolic => train_parabolic(cfg, out_dir),
        ExperimentKind::Gradcheck => run_gradcheck(cfg, out_dir),
        ExperimentKind::StencilConvergence => stencil_convergence(cfg, out_dir),
        ExperimentKind::WaveFree => wave_free(cfg, out_dir),
        ExperimentKind::WaveSteer => wave_steer(cfg, out_dir),
        ExperimentKind::WaveVelocity => wave_velocity(cfg, out_dir),
        ExperimentKind::SaturatePlan => saturate_plan_demo(cfg, out_dir),
        ExperimentKind::AbsorbNonlinear => absorb_nonlinear(cfg, out_dir),
    }
}

fn build_grid(cfg: &ExperimentConfig) -> anyhow::Result<Grid<Real>> {
    let dim = Dim::from_usize(cfg.grid.dim).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Grid::new(dim, cfg.grid.half_extent, cfg.grid.n_half)
        .map_err(|e| anyhow::anyhow!(e.to_string()))
}

fn bump(grid: &Grid<Real>, center: Real, width: Real) -> Vec<Real> {
    grid.field_from_fn(move |x| (-((x[0] - center) / width).powi(2)).exp())
}

/// The supervised translation task: move a bump by `shift` over the horizon.
fn train_parabolic(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<ResultBundle> {
    let grid = build_grid(cfg)?;
    let boxc = cfg.constraint_box.build()?;
    let setup = TrainSetup {
        grid: grid.clone(),
        t_final: cfg.time.t_final,
        nt: cfg.time.nt,
        sigma: cfg.sigma.build()?,
        weight: cfg.weight.build()?,
    };
    let half_shift = cfg.train.shift / 2.0;
    let width = cfg.train.bump_width;
    let mut samples = vec![TrainSample {
        m0: bump(&grid, -half_shift, width),
        m_target: bump(&grid, half_shift, width),
    }];
    for k in 0..cfg.train.extra_samples {
        let offset = 0.2 * (k + 1) as Real;
        samples.push(TrainSample {
            m0: bump(&grid, -half_shift + offset, width),
            m_target: bump(&grid, half_shift + offset, width),
        });
    }
    let init = default_initialization(&grid, cfg.time.nt, &boxc);
    let train_cfg = cfg.train.build();
    let result = train(&setup, &samples, &init, &boxc, &train_cfg)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    let mut history = CsvTable::new("iter,loss,step,grad_norm");
    for rec in &result.history {
        history.row(format!("{},{},{},{}", rec.iter, rec.loss, rec.step, rec.grad_norm));
    }
    history.write(&out_dir.join("history.csv"))?;
    save_fields(&out_dir.join("coefficients.npde"), &grid, &result.coeffs)?;

    // trajectory of the primary sample under the trained coefficients
    let p = ParabolicProblem {
        grid: grid.clone(),
        t_final: cfg.time.t_final,
        nt: cfg.time.nt,
        coeffs: result.coeffs.clone(),
        sigma: setup.sigma,
        m0: samples[0].m0.clone(),
        weight: setup.weight,
    };
    let traj = solve_forward(&p).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let energy = energy_diagnostic(&traj, &p).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    save_trajectory(&out_dir.join("trajectory.npde"), &grid, &traj)?;
    std::fs::write(out_dir.join("trajectory.csv"), trajectory_csv(&grid, &traj))?;

    // containers must round-trip bit-exactly
    let reloaded = crate::io::load_fields(&out_dir.join("coefficients.npde"), &grid)?;
    anyhow::ensure!(reloaded == result.coeffs, "coefficient container round trip mismatch");
    let retraj = crate::io::load_trajectory(&out_dir.join("trajectory.npde"), &grid)?;
    anyhow::ensure!(retraj.snapshots == traj.snapshots, "trajectory container round trip mismatch");

    let mut bundle = ResultBundle::new();
    bundle.artifacts.push("history.csv".into());
    bundle.artifacts.push("coefficients.npde".into());
    bundle.artifacts.push("trajectory.npde".into());
    bundle.artifacts.push("trajectory.csv".into());
    bundle.metric("energy_ratio", energy.ratio);
    let first = result.history.first().map(|r| r.loss).unwrap_or(0.0);
    let last = result.history.last().map(|r| r.loss).unwrap_or(0.0);
    bundle.metric("initial_loss", first);
    bundle.metric("final_loss", last);
    bundle.metric(
        "loss_reduction",
        if first > 0.0 { 1.0 - last / first } else { 0.0 },
    );
    bundle.metric("iterations", result.history.len() - 1);
    bundle.metric("final_grad_norm", result.final_grad_norm);
    bundle.metric("converged", result.converged);
    Ok(bundle)
}

fn run_gradcheck(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<ResultBundle> {
    let grid = build_grid(cfg)?;
    let boxc = cfg.constraint_box.build()?;
    let mut coeffs = default_initialization(&grid, cfg.time.nt, &boxc);
    // break spatial symmetry so every gradient component is exercised
    for (k, level) in coeffs.levels.iter_mut().enumerate() {
        let phase = 0.1 * k as Real;
        for i in 0..grid.n_total() {
            let x = grid.coords(i)[0];
            level.lin.alpha[i] += 0.2 * (x + phase).sin();
            level.lin.theta[i] += 0.1 * (x - phase).cos();
        }
    }
    let p = ParabolicProblem {
        grid: grid.clone(),
        t_final: cfg.time.t_final,
        nt: cfg.time.nt,
        coeffs,
        sigma: cfg.sigma.build()?,
        m0: bump(&grid, -0.2, 0.6),
        weight: cfg.weight.build()?,
    };
    let target = bump(&grid, 0.25, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let report = gradcheck(&p, &target, cfg.gradcheck.n_probes, cfg.gradcheck.fd_step, &mut rng)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    let mut table = CsvTable::new("probe,dir_deriv_adjoint,dir_deriv_fd,rel_err");
    for (i, probe) in report.probes.iter().enumerate() {
        table.row(format!(
            "{},{},{},{}",
            i, probe.adjoint_derivative, probe.fd_derivative, probe.rel_err
        ));
    }
    table.write(&out_dir.join("gradcheck.csv"))?;

    let mut bundle = ResultBundle::new();
    bundle.artifacts.push("gradcheck.csv".into());
    bundle.metric("n_probes", report.probes.len());
    bundle.metric("max_rel_err", report.max_rel_err);
    Ok(bundle)
}

fn stencil_convergence(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<ResultBundle> {
    let l = cfg.grid.half_extent;
    let mut bundle = ResultBundle::new();
    let mut table = CsvTable::new("case,h,max_error");

    // 1D: theta y + alpha y' + beta y'' on a smooth field
    let grids = dyadic_grids(Dim::One, l, cfg.grid.n_half, 3)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let builder = |g: &Grid<Real>| -> npde_core::Result<(OperatorMatrix<Real>, Vec<Real>)> {
        let c = CoefficientSlice::constant(g, &[1.0], &[1.0], 0.5);
        let op = assemble_kdelta_1d(&c, g, OperatorForm::NonDivergence)?;
        Ok((op, g.field_from_fn(|x| (std::f64::consts::PI * x[0] / l).sin())))
    };
    let reference = move |x: [Real; 2]| {
        let k = std::f64::consts::PI / l;
        0.5 * (k * x[0]).sin() + k * (k * x[0]).cos() - k * k * (k * x[0]).sin()
    };
    match consistency_order(&grids, &builder, &reference)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?
    {
        ConsistencyReport::Order { slope, errors } => {
            for (h, e) in errors {
                table.row(format!("one_dimensional,{h},{e}"));
            }
            bundle.metric("order_1d", slope);
        }
        ConsistencyReport::Exact { .. } => bundle.metric("order_1d", "exact"),
    }

    // 2D: all six stencil terms on a smooth field
    let n2 = (cfg.grid.n_half / 2).max(4);
    let grids = dyadic_grids(Dim::Two, l, n2, 3).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let builder2 = |g: &Grid<Real>| -> npde_core::Result<(OperatorMatrix<Real>, Vec<Real>)> {
        let c = CoefficientSlice::constant(g, &[0.7, -0.4], &[1.0, 0.3, 0.8], 0.2);
        let op = assemble_kdelta_2d(&c, g, OperatorForm::NonDivergence)?;
        Ok((op, g.field_from_fn(|x| {
            (std::f64::consts::PI * x[0] / l).sin() * (std::f64::consts::PI * x[1] / l).cos()
        })))
    };
    let reference2 = move |x: [Real; 2]| {
        let k = std::f64::consts::PI / l;
        let (s1, c1) = (k * x[0]).sin_cos();
        let (s2, c2) = (k * x[1]).sin_cos();
        let y = s1 * c2;
        let yx = k * c1 * c2;
        let yy = -k * s1 * s2;
        let yxx = -k * k * y;
        let yyy = -k * k * y;
        let yxy = -k * k * c1 * s2;
        0.2 * y + 0.7 * yx - 0.4 * yy + 1.0 * yxx + 2.0 * 0.3 * yxy + 0.8 * yyy
    };
    match consistency_order(&grids, &builder2, &reference2)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?
    {
        ConsistencyReport::Order { slope, errors } => {
            for (h, e) in errors {
                table.row(format!("two_dimensional,{h},{e}"));
            }
            bundle.metric("order_2d", slope);
        }
        ConsistencyReport::Exact { .. } => bundle.metric("order_2d", "exact"),
    }

    table.write(&out_dir.join("convergence.csv"))?;
    bundle.artifacts.push("convergence.csv".into());
    Ok(bundle)
}

fn wave_context(cfg: &ExperimentConfig) -> anyhow::Result<WaveContext<Real>> {
    let basis = HermiteBasis::with_default_order(Dim::One, cfg.wave.n_max)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(WaveContext::new(basis))
}

fn wave_free(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<ResultBundle> {
    let ctx = wave_context(cfg)?;
    let n = ctx.mode_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    use rand::Rng;
    let a: Vec<Real> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let b: Vec<Real> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let state = HermiteState::new(a, b).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let e0 = wave_energy(&state, &ctx.basis);
    let mut table = CsvTable::new("t,energy,drift");
    let mut max_drift: Real = 0.0;
    let steps = 40;
    for k in 0..=steps {
        let t = 10.0 * k as Real / steps as Real;
        let e = wave_energy(&free_evolution(&state, &ctx.basis, t), &ctx.basis);
        let drift = (e - e0).abs() / e0.max(1e-300);
        max_drift = max_drift.max(drift);
        table.row(format!("{t},{e},{drift}"));
    }
    table.write(&out_dir.join("energy.csv"))?;
    let mut bundle = ResultBundle::new();
    bundle.artifacts.push("energy.csv".into());
    bundle.metric("initial_energy", e0);
    bundle.metric("max_relative_drift", max_drift);
    Ok(bundle)
}

fn write_plan(
    plan: &npde_core::bilinear::SynthesisPlan<Real>,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let mut table = CsvTable::new("kind,duration,payload");
    for (kind, duration, payload) in plan_rows(plan) {
        table.row(format!("{kind},{duration},{payload}"));
    }
    table.write(&out_dir.join("plan.csv"))
}

fn wave_velocity(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<ResultBundle> {
    let ctx = wave_context(cfg)?;
    let n = ctx.mode_count();
    // two-mode start (positive everywhere), target velocity on the zero mode
    let mut a = vec![0.0; n];
    a[0] = 1.0;
    a[2] = 0.5;
    let s0 = HermiteState::new(a, vec![0.0; n]).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let v = ctx.basis.unit_mode([0, 0]).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let steer_cfg = SteerConfig { freq_range: cfg.wave.freq_range, ..SteerConfig::default() };
    let out = steer_velocity(&ctx, &s0, &v, cfg.wave.epsilon, cfg.wave.total_time, &steer_cfg)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    write_plan(&out.plan, out_dir)?;
    let final_state = out.plan.execute(&ctx, &s0).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    std::fs::write(out_dir.join("state.csv"), state_csv(&ctx.basis, &final_state))?;
    let mut bundle = ResultBundle::new();
    bundle.artifacts.push("plan.csv".into());
    bundle.artifacts.push("state.csv".into());
    bundle.metric("projection_residual", out.projection_residual);
    bundle.metric("executed_error", out.executed_error);
    bundle.metric("epsilon", cfg.wave.epsilon);
    bundle.metric("plan_pulses", out.plan.n_pulses());
    bundle.metric("plan_duration", out.plan.duration());
    Ok(bundle)
}

fn wave_steer(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<ResultBundle> {
    let ctx = wave_context(cfg)?;
    let n = ctx.mode_count();
    let s0 = HermiteState::new(
        ctx.basis.unit_mode([0, 0]).map_err(|e| anyhow::anyhow!(e.to_string()))?,
        vec![0.0; n],
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    // reachable composite target: kick the stationary state and let it ring
    let one = HermiteState::new(ctx.basis.constant_one(), vec![0.0; n])
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let kick = {
        let mut p = TrigPoly::<Real>::constant_fn(0.25);
        p.add_term([1, 0], 0.4, 0.0);
        p
    };
    let mult = ctx
        .multiplication_matrix(&ctx.trig_nodes(&kick))
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let kicked = HermiteState::new(one.a.clone(), mult.matvec(&one.a))
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let s_target = free_evolution(&kicked, &ctx.basis, 0.8);

    let steer_cfg = SteerConfig { freq_range: cfg.wave.freq_range, ..SteerConfig::default() };
    let out = steer_full(&ctx, &s0, &s_target, cfg.wave.epsilon, cfg.wave.total_time, &steer_cfg)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    write_plan(&out.plan, out_dir)?;

    // execution trace at the segment boundaries
    let mut trace = CsvTable::new("t,norm_h1w,norm_l2w,error_to_target");
    let mut state = s0.clone();
    let mut t = 0.0;
    trace.row(format!("{t},{},{},{}", state_h1(&ctx, &state), state_l2(&ctx, &state), state.distance(&s_target, &ctx.basis)));
    for seg in &out.plan.segments {
        let single = npde_core::bilinear::SynthesisPlan { segments: vec![seg.clone()] };
        state = single.execute(&ctx, &state).map_err(|e| anyhow::anyhow!(e.to_string()))?;
        t += seg.duration();
        trace.row(format!(
            "{t},{},{},{}",
            state_h1(&ctx, &state),
            state_l2(&ctx, &state),
            state.distance(&s_target, &ctx.basis)
        ));
    }
    trace.write(&out_dir.join("trace.csv"))?;
    std::fs::write(out_dir.join("state.csv"), state_csv(&ctx.basis, &state))?;

    let mut bundle = ResultBundle::new();
    bundle.artifacts.push("plan.csv".into());
    bundle.artifacts.push("trace.csv".into());
    bundle.artifacts.push("state.csv".into());
    bundle.metric("executed_error", out.executed_error);
    bundle.metric("epsilon", cfg.wave.epsilon);
    bundle.metric("plan_duration", out.plan.duration());
    bundle.metric("requested_duration", cfg.wave.total_time);
    Ok(bundle)
}

fn state_h1(ctx: &WaveContext<Real>, s: &HermiteState<Real>) -> Real {
    use npde_core::hermite::eigenvalue;
    let mut acc = 0.0;
    for (k, &a) in s.a.iter().enumerate() {
        acc += (1.0 + eigenvalue::<Real>(ctx.basis.indices()[k])) * a * a;
    }
    acc.sqrt()
}

fn state_l2(_ctx: &WaveContext<Real>, s: &HermiteState<Real>) -> Real {
    s.bdot.iter().map(|&b| b * b).sum::<Real>().sqrt()
}

fn saturate_plan_demo(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<ResultBundle> {
    let ctx = wave_context(cfg)?;
    let n = ctx.mode_count();
    let probe = HermiteState::new(
        ctx.basis.unit_mode([0, 0]).map_err(|e| anyhow::anyhow!(e.to_string()))?,
        vec![0.0; n],
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let psi = TrigPoly::<Real>::term([2, 0], 1.0, 0.0);
    let plan = saturate_plan(&ctx, &psi, cfg.wave.epsilon, cfg.wave.total_time, &probe)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    write_plan(&plan, out_dir)?;
    let executed = plan.execute(&ctx, &probe).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mult = ctx
        .multiplication_matrix(&ctx.trig_nodes(&psi))
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let kick = mult.matvec(&probe.a);
    let target = HermiteState::new(
        probe.a.clone(),
        probe.bdot.iter().zip(&kick).map(|(&b, &k)| b + k).collect(),
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut bundle = ResultBundle::new();
    bundle.artifacts.push("plan.csv".into());
    bundle.metric("executed_error", executed.distance(&target, &ctx.basis));
    bundle.metric("epsilon", cfg.wave.epsilon);
    bundle.metric("plan_pulses", plan.n_pulses());
    Ok(bundle)
}

fn absorb_nonlinear(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<ResultBundle> {
    let ctx = wave_context(cfg)?;
    let n = ctx.mode_count();
    let mut a = vec![0.0; n];
    a[0] = 1.0;
    a[1] = 0.4;
    let s0 = HermiteState::new(a, vec![0.0; n]).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let law = ControlLaw::constant(vec![0.3, -0.2, 0.15], 0.4)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?
        .concatenate(
            &ControlLaw::constant(vec![-0.1, 0.25, 0.0], 0.4)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        );
    let run =
        LinearRun::new(&ctx, s0, law).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let sigma = cfg.sigma.build()?;
    let report = absorb_nonlinearity(&ctx, &run, sigma, 8, 50)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut table = CsvTable::new("t");
    for t in &report.times {
        table.row(format!("{t}"));
    }
    table.write(&out_dir.join("matched_times.csv"))?;
    let mut bundle = ResultBundle::new();
    bundle.artifacts.push("matched_times.csv".into());
    bundle.metric("max_sup_error", report.max_sup_error);
    Ok(bundle)
}
