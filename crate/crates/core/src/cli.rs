//! Command-line front end: `run`, `validate`, `geometry-check` and
//! `oracle-compare`.
//!
//! Exit codes: 0 success, 1 configuration or validation failure, 2 step
//! budget exhausted, 3 guard rail tripped, 4 Newton oracle failed, 5 flow and
//! oracle disagree.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use crate::config::{GridSection, InitialSection, RunConfig};
use crate::error::{Error, Result};
use crate::flow::{check_hypotheses, Flow, FlowConfig, FlowResult, FlowStatus, StepRecord};
use crate::geometry::{self, assemble_state, BodyState};
use crate::oracle;
use crate::sphere::SphereGrid;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MAX_STEPS: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_ORACLE: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;

/// Flow and oracle must agree to this sup-norm distance.
pub const ORACLE_MATCH_TOL: f64 = 1e-5;

pub const DIAGNOSTICS_HEADER: &str = "step,t,dt,theta,v_phi,j_phi,residual_sup,residual_l2,u_min,u_max,grad_ratio_max,K_max,min_eig_b_min,max_eig_b_max,rejected";

#[derive(Parser, Debug)]
#[command(name = "gcflow", version, about = "Gauss curvature flow solver for the dual Orlicz-Minkowski problem")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Suppress progress output on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the flow to its stationary limit.
    Run(RunArgs),
    /// Check the configuration and hypotheses without stepping.
    Validate(ConfigArgs),
    /// Geometric consistency checks on the initial body.
    GeometryCheck(ConfigArgs),
    /// Run the flow and compare the limit with the Newton solution (S¹ only).
    OracleCompare(RunArgs),
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let quiet = cli.quiet;
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a, quiet),
        Command::Validate(a) => cmd_validate(a, quiet),
        Command::GeometryCheck(a) => cmd_geometry_check(a, quiet),
        Command::OracleCompare(a) => cmd_oracle_compare(a, quiet),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn output_dir(cfg: &RunConfig, out: &Option<PathBuf>) -> PathBuf {
    out.clone()
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Loads the configuration, reporting any failure on stderr.
fn load(path: &Path) -> std::result::Result<(RunConfig, FlowConfig), i32> {
    let parsed = RunConfig::from_path(path).and_then(|c| {
        let f = c.flow_config()?;
        Ok((c, f))
    });
    parsed.map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

fn build_flow(fc: FlowConfig) -> std::result::Result<Flow, i32> {
    Flow::new(fc).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

pub fn diagnostics_row(r: &StepRecord) -> String {
    let s = &r.snapshot;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.step,
        fmt_f(r.t),
        fmt_f(r.dt),
        fmt_f(s.theta),
        fmt_f(s.v_phi),
        fmt_f(s.j_phi),
        fmt_f(s.residual_sup),
        fmt_f(s.residual_l2),
        fmt_f(r.u_min),
        fmt_f(r.u_max),
        fmt_f(r.grad_ratio_max),
        fmt_f(r.k_max),
        fmt_f(r.min_eig_b_min),
        fmt_f(r.max_eig_b_max),
        r.rejected
    )
}

fn angle_header(dim: usize) -> &'static str {
    if dim == 1 {
        "theta"
    } else {
        "colatitude,longitude"
    }
}

fn angle_cells(grid: &SphereGrid, i: usize) -> String {
    let a = grid.angles()[i];
    if grid.dim() == 1 {
        fmt_f(a[0])
    } else {
        format!("{},{}", fmt_f(a[0]), fmt_f(a[1]))
    }
}

/// Final profile: angle(s), u, r, K.
pub fn write_final_profile(path: &Path, state: &BodyState) -> Result<()> {
    let grid = state.grid();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{},u,r,K", angle_header(grid.dim()))?;
    for i in 0..grid.len() {
        writeln!(
            w,
            "{},{},{},{}",
            angle_cells(grid, i),
            fmt_f(state.u()[i]),
            fmt_f(state.r()[i]),
            fmt_f(state.gauss_k()[i])
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Body state: angle(s), u, r, K, min_eig_b.
pub fn write_body_state(path: &Path, state: &BodyState) -> Result<()> {
    let grid = state.grid();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{},u,r,K,min_eig_b", angle_header(grid.dim()))?;
    for i in 0..grid.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            angle_cells(grid, i),
            fmt_f(state.u()[i]),
            fmt_f(state.r()[i]),
            fmt_f(state.gauss_k()[i]),
            fmt_f(state.min_eig_b()[i])
        )?;
    }
    w.flush()?;
    Ok(())
}

fn status_code(status: FlowStatus) -> i32 {
    match status {
        FlowStatus::Converged => EXIT_OK,
        FlowStatus::MaxSteps => EXIT_MAX_STEPS,
        FlowStatus::GuardTripped => EXIT_GUARD,
    }
}

/// Runs the flow, streaming diagnostics and profile snapshots into `dir`.
fn run_flow(flow: Flow, dir: &Path, profiles_every: usize) -> Result<FlowResult> {
    fs::create_dir_all(dir)?;
    let mut diag = BufWriter::new(File::create(dir.join("diagnostics.csv"))?);
    writeln!(diag, "{DIAGNOSTICS_HEADER}")?;
    let profile_dir = dir.join("profiles");
    if profiles_every > 0 {
        fs::create_dir_all(&profile_dir)?;
    }
    let mut failure: Option<Error> = None;
    let result = flow.run_with(|rec, state| {
        if failure.is_some() {
            return;
        }
        if let Err(e) = writeln!(diag, "{}", diagnostics_row(rec)) {
            failure = Some(e.into());
            return;
        }
        if profiles_every > 0 && rec.step % profiles_every == 0 {
            let path = profile_dir.join(format!("profile_{:08}.csv", rec.step));
            if let Err(e) = write_body_state(&path, state) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    diag.flush()?;
    Ok(result)
}

fn summary_json(cfg: &RunConfig, fc: &FlowConfig, res: &FlowResult, wall: f64) -> serde_json::Value {
    let h = &res.hypothesis;
    let first = &res.diagnostics[0];
    let last = res.diagnostics.last().unwrap_or(first);
    json!({
        "status": res.status,
        "lambda0": res.lambda0,
        "steps": res.steps,
        "t_final": res.t,
        "wall_time_s": wall,
        "attempts": res.attempts,
        "rejections": res.rejections,
        "guard_reason": res.guard_reason,
        "guard_rails": res.guards,
        "grid": cfg.grid,
        "hypotheses": {
            "case": h.case,
            "case_i": {
                "pass": h.case_i.pass,
                "sup": h.case_i.sup,
                "sup_sampled": h.case_i.sup_sampled,
                "sup_closed_form": h.case_i.sup_closed,
                "certified_domain": [h.case_i.certified_domain.0, h.case_i.certified_domain.1],
            },
            "case_ii": {
                "pass": h.case_ii.pass,
                "phi_integrable_at_zero": h.case_ii.phi_integrable_at_zero,
                "integrability_method": h.case_ii.integrability_method,
                "density_even": h.case_ii.density_even,
                "initial_odd_part": h.initial_odd_part,
            },
        },
        "conservation": {
            "v_phi_initial": first.snapshot.v_phi,
            "v_phi_final": last.snapshot.v_phi,
            "relative_drift_max": res.v_drift,
        },
        "final": {
            "residual_sup": last.snapshot.residual_sup,
            "residual_l2": last.snapshot.residual_l2,
            "j_phi": last.snapshot.j_phi,
            "u_min": last.u_min,
            "u_max": last.u_max,
        },
        "tolerances": {
            "tol_stop": fc.tol_stop,
            "tol_theta": fc.tol_theta,
            "theta_window": fc.theta_window,
            "dt_min": fc.dt_min,
            "dt_max": fc.dt_max,
            "c_cfl": fc.c_cfl,
            "growth": fc.growth,
            "guard_factor": fc.guard_factor,
            "max_steps": fc.max_steps,
        },
        "seed": fc.seed,
    })
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn report_run(quiet: bool, res: &FlowResult) {
    let last = res.diagnostics.last().expect("initial record");
    say(
        quiet,
        format!(
            "status {}  steps {}  t {:.6}  lambda0 {:.12}  residual {:.3e}  V drift {:.3e}  rejected {}",
            res.status,
            res.steps,
            res.t,
            res.lambda0,
            last.snapshot.residual_sup,
            res.v_drift,
            res.rejections.total()
        ),
    );
    if let Some(r) = &res.guard_reason {
        eprintln!("guard tripped: {r}");
    }
}

pub fn cmd_run(args: &RunArgs, quiet: bool) -> Result<i32> {
    let (cfg, fc) = match load(&args.config) {
        Ok(v) => v,
        Err(code) => return Ok(code),
    };
    let flow = match build_flow(fc.clone()) {
        Ok(f) => f,
        Err(code) => return Ok(code),
    };
    let dir = output_dir(&cfg, &args.out);
    let start = Instant::now();
    let res = run_flow(flow, &dir, cfg.output.emit_profiles_every)?;
    let wall = start.elapsed().as_secs_f64();
    write_final_profile(&dir.join("final_profile.csv"), &res.state)?;
    write_json(&dir.join("summary.json"), &summary_json(&cfg, &fc, &res, wall))?;
    report_run(quiet, &res);
    Ok(status_code(res.status))
}

pub fn cmd_validate(args: &ConfigArgs, quiet: bool) -> Result<i32> {
    let (_, fc) = match load(&args.config) {
        Ok(v) => v,
        Err(code) => return Ok(code),
    };
    let checked = (|| -> Result<_> {
        let grid = SphereGrid::new(fc.resolution.dim(), fc.resolution)?;
        fc.density.sample(&grid)?;
        let u0 = fc.initial.sample(&grid)?;
        let state = assemble_state(Arc::new(grid.clone()), u0.clone())?;
        state.require_convex()?;
        check_hypotheses(&fc, &grid, &u0)
    })();
    let case_i = crate::orlicz::check_case_i(&fc.phi);
    let case_ii = crate::orlicz::check_case_ii(&fc.phi, &fc.density);
    say(
        quiet,
        format!(
            "case (i):  {}  sup sφ'/φ = {}  (sampled {}, certified on [{:e}, {:e}])",
            if case_i.pass { "pass" } else { "fail" },
            case_i.sup,
            case_i.sup_sampled,
            case_i.certified_domain.0,
            case_i.certified_domain.1
        ),
    );
    say(
        quiet,
        format!(
            "case (ii): {}  Φ finite at 0: {} ({}), density even: {}",
            if case_ii.pass { "pass" } else { "fail" },
            case_ii.phi_integrable_at_zero,
            case_ii.integrability_method,
            case_ii.density_even
        ),
    );
    match checked {
        Ok(_) => {
            say(quiet, format!("configuration valid for case ({})", fc.case));
            Ok(EXIT_OK)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(EXIT_CONFIG)
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyFile {
    grid: GridSection,
    initial: InitialSection,
}

/// Tolerances of the geometry check on a grid of spacing `h`.
pub struct GeometryTolerances {
    pub inequality: f64,
    pub extremal_gap: f64,
    pub roundtrip: f64,
    pub weight: f64,
}

impl GeometryTolerances {
    pub fn for_spacing(h: f64) -> Self {
        Self {
            inequality: 1e-8,
            extremal_gap: 10.0 * h * h,
            roundtrip: 1e-3,
            weight: 5.0 * h * h,
        }
    }
}

fn body_from_file(path: &Path) -> Result<BodyState> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    // a full run configuration is accepted as well as a body-only file
    let cfg = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(_) => {
            let b: BodyFile = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            RunConfig {
                grid: b.grid,
                initial: b.initial,
                ..RunConfig::from_json(PLACEHOLDER).expect("placeholder parses")
            }
        }
    };
    let res = cfg.resolution()?;
    let grid = Arc::new(SphereGrid::new(res.dim(), res)?);
    let u = cfg.initial_body()?.sample(&grid)?;
    assemble_state(grid, u)
}

const PLACEHOLDER: &str = r#"{
    "grid": { "dim": 1, "resolution": 8 },
    "phi": { "kind": "power", "params": { "q": 1.0 } },
    "density": { "kind": "constant", "params": { "c": 1.0 } },
    "initial": { "kind": "sphere", "params": { "radius": 1.0 } },
    "flow": { "case": "ii" }
}"#;

pub fn cmd_geometry_check(args: &ConfigArgs, quiet: bool) -> Result<i32> {
    let state = match body_from_file(&args.config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    if let Err(e) = state.require_convex() {
        eprintln!("error: {e}");
        return Ok(EXIT_CONFIG);
    }
    let grid = state.grid().clone();
    let tol = GeometryTolerances::for_spacing(grid.spacing());
    let lemma = geometry::lemma_ur_check(&state);
    let roundtrip = geometry::support_from_radial_roundtrip(&state)?;
    let w = geometry::pushforward_weight(&state)?;
    let weight_gap = (grid.quadrature(&w)? / grid.area() - 1.0).abs();
    let rows = [
        ("|max u - max r|", lemma.max_gap, lemma.max_gap <= tol.extremal_gap, tol.extremal_gap),
        ("|min u - min r|", lemma.min_gap, lemma.min_gap <= tol.extremal_gap, tol.extremal_gap),
        ("support-plane residual", lemma.support_residual, lemma.support_residual >= -tol.inequality, -tol.inequality),
        ("closest-point residual", lemma.radial_residual, lemma.radial_residual >= -tol.inequality, -tol.inequality),
        ("radial roundtrip mismatch", roundtrip, roundtrip <= tol.roundtrip, tol.roundtrip),
        ("pushforward weight defect", weight_gap, weight_gap <= tol.weight, tol.weight),
    ];
    let mut ok = true;
    for (name, value, pass, bound) in rows {
        ok &= pass;
        say(
            quiet,
            format!("{:<28} {:>24}  bound {:>12.3e}  {}", name, fmt_f(value), bound, if pass { "pass" } else { "FAIL" }),
        );
    }
    Ok(if ok { EXIT_OK } else { EXIT_CONFIG })
}

pub fn cmd_oracle_compare(args: &RunArgs, quiet: bool) -> Result<i32> {
    let (cfg, fc) = match load(&args.config) {
        Ok(v) => v,
        Err(code) => return Ok(code),
    };
    if fc.resolution.dim() != 1 {
        eprintln!("error: oracle is n=1 only");
        return Ok(EXIT_CONFIG);
    }
    let flow = match build_flow(fc.clone()) {
        Ok(f) => f,
        Err(code) => return Ok(code),
    };
    let problem = flow.problem().clone();
    let grid = flow.grid().clone();
    let dir = output_dir(&cfg, &args.out);
    let start = Instant::now();
    let res = run_flow(flow, &dir, cfg.output.emit_profiles_every)?;
    write_final_profile(&dir.join("final_profile.csv"), &res.state)?;
    write_json(
        &dir.join("summary.json"),
        &summary_json(&cfg, &fc, &res, start.elapsed().as_secs_f64()),
    )?;
    report_run(quiet, &res);
    if res.status != FlowStatus::Converged {
        return Ok(status_code(res.status));
    }
    let v0 = res.diagnostics[0].snapshot.v_phi;
    let solved = (|| -> Result<_> {
        let rho = oracle::sphere_radius_for_volume(&grid, &problem, v0)?;
        let np = oracle::NewtonProblem::new(grid.clone(), problem.clone(), v0)?;
        oracle::newton_solve(&np, &crate::sphere::ScalarField::constant(&grid, rho))
    })();
    let sol = match solved {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_ORACLE);
        }
    };
    let mut w = BufWriter::new(File::create(dir.join("compare.csv"))?);
    writeln!(w, "theta,u_flow,u_newton,diff")?;
    let mut sup_diff: f64 = 0.0;
    for i in 0..grid.len() {
        let d = res.state.u()[i] - sol.u[i];
        sup_diff = sup_diff.max(d.abs());
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f(grid.angles()[i][0]),
            fmt_f(res.state.u()[i]),
            fmt_f(sol.u[i]),
            fmt_f(d)
        )?;
    }
    w.flush()?;
    let lambda_diff = (res.lambda0 - sol.lambda).abs();
    say(
        quiet,
        format!(
            "sup |u_flow - u_newton| = {sup_diff:.3e}  |lambda0 - lambda*| = {lambda_diff:.3e}  (newton iterations {})",
            sol.iterations
        ),
    );
    Ok(if sup_diff <= ORACLE_MATCH_TOL && lambda_diff <= ORACLE_MATCH_TOL {
        EXIT_OK
    } else {
        EXIT_MISMATCH
    })
}
