//! `iabench`: scenario-driven front end for `ia-core`.
//!
//! Every command reads a key-value scenario (see [`scenario`]), prints a
//! plain-text report and, when an output directory is configured, writes its
//! artifacts there atomically.

pub mod scenario;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ia_core::aiding::{constant_stream, match_slots, quantized_stream, AidingError};
use ia_core::channel::{random_channel, ChannelError, ExtendedChannel};
use ia_core::design::{
    design_plan, design_plan_forced, plan_with_multiplier, synthesize_plan_channel,
    verify_alignment, AlignmentReport, BeamformingSet, DesignError, PeelingPlan, PlanDesign,
    TargetSpec,
};
use ia_core::graph::GraphError;
use ia_core::lp::{
    build_lp, classify, format_rational, optimal_face_probe, solve_optimal_dof, verify_kkt,
    DoFAssignment, DualCertificate, LpError, NetworkClass,
};
use ia_core::sim::{dof_slope_from_points, rates_csv, sweep, SimError};
use thiserror::Error;

pub use scenario::{Scenario, StreamKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    /// Carries the report produced before infeasibility was detected.
    #[error("{message}")]
    Infeasible { message: String, report: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Infeasible { .. } => 4,
        }
    }

    fn infeasible(message: impl Into<String>) -> Self {
        CliError::Infeasible {
            message: message.into(),
            report: String::new(),
        }
    }
}

impl From<LpError> for CliError {
    fn from(e: LpError) -> Self {
        CliError::Numeric(format!("[dof-lp] {e}"))
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Singular { .. } => CliError::Numeric(format!("[channel-core] {e}")),
            _ => CliError::Input(format!("[channel-core] {e}")),
        }
    }
}

impl From<AidingError> for CliError {
    fn from(e: AidingError) -> Self {
        let msg = format!("[channel-aiding] {e}");
        match e {
            AidingError::Infeasible(_) => CliError::infeasible(msg),
            AidingError::SizeMismatch { .. }
            | AidingError::InvalidStructure(_)
            | AidingError::InvalidTolerance(_)
            | AidingError::EmptyStream => CliError::Input(msg),
            AidingError::Channel(c) => c.into(),
            AidingError::Lp(l) => l.into(),
            _ => CliError::Numeric(msg),
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        let msg = format!("[ia-design] {e}");
        match e {
            DesignError::Aiding(a) => a.into(),
            DesignError::Graph(GraphError::Channel(c)) => c.into(),
            DesignError::Graph(_) | DesignError::Parse { .. } => CliError::Input(msg),
            DesignError::Infeasible { .. }
            | DesignError::Uncoverable { .. }
            | DesignError::TooManyColumns { .. } => CliError::infeasible(msg),
            _ => CliError::Numeric(msg),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NotDecodable(_) => {
                CliError::infeasible("[sim-harness] configuration is not decodable")
            }
            SimError::TooFewPoints(_) => CliError::Input(format!("[sim-harness] {e}")),
            SimError::InvalidPower(_) => CliError::Numeric(format!("[sim-harness] {e}")),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "iabench",
    version,
    about = "Channel-aided interference alignment workbench"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Use a generic random channel instead of an aided one.
    #[arg(long, global = true)]
    pub generic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimal DoF, dual certificate and classification.
    Dof,
    /// Network class and optimal-face summary.
    Classify,
    /// Aiding conditions per peeling round.
    Conditions,
    /// Aided (or generic) channel.
    Synth,
    /// Beamformers for the scenario channel.
    Design,
    /// Rank-based alignment check.
    Verify,
    /// Zero-forcing rates over the SNR list.
    Simulate,
    /// Conditions, synthesis, design, verification and simulation.
    Pipeline,
    /// Approximate slot matching over a tolerance sweep.
    Match,
    /// Writes a slot stream for `match`.
    Stream,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub scenario: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub generic: bool,
}

impl Options {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        Ok(Self {
            scenario: cli
                .scenario
                .clone()
                .ok_or_else(|| CliError::Input("missing --scenario <path>".into()))?,
            seed: cli.seed,
            out: cli.out.clone(),
            generic: cli.generic,
        })
    }
}

/// Writes `contents` to `dir/name` through a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| {
        CliError::Input(format!(
            "[cli] cannot write {}: {e}",
            dir.join(name).display()
        ))
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| io(e.error))?;
    Ok(target)
}

struct Run {
    s: Scenario,
    out: Option<PathBuf>,
    generic: bool,
    report: String,
}

impl Run {
    fn new(opts: &Options) -> Result<Self, CliError> {
        let mut s = Scenario::load(&opts.scenario)?;
        if let Some(seed) = opts.seed {
            s.seed = seed;
        }
        let out = opts.out.clone().or_else(|| s.out.clone());
        Ok(Self {
            s,
            out,
            generic: opts.generic,
            report: String::new(),
        })
    }

    fn line(&mut self, text: impl AsRef<str>) {
        self.report.push_str(text.as_ref());
        self.report.push('\n');
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        if let Some(dir) = self.out.clone() {
            let path = write_atomic(&dir, name, contents)?;
            self.line(format!("wrote {}", path.display()));
        }
        Ok(())
    }

    fn fail(&self, message: impl Into<String>) -> CliError {
        CliError::Infeasible {
            message: message.into(),
            report: self.report.clone(),
        }
    }

    /// Attaches the report so far to an infeasibility error.
    fn attach(&self, e: impl Into<CliError>) -> CliError {
        match e.into() {
            CliError::Infeasible { message, .. } => self.fail(message),
            other => other,
        }
    }

    fn optimum(&self) -> Result<(DoFAssignment, DualCertificate, NetworkClass), CliError> {
        let lp = build_lp(&self.s.network);
        let (d, dual) = solve_optimal_dof(&lp)?;
        Ok((d, dual, classify(&self.s.network)?))
    }

    fn plan(&mut self) -> Result<PeelingPlan, CliError> {
        let (d, _, _) = self.optimum()?;
        let plan = plan_with_multiplier(&self.s.network, &d, self.s.n)?;
        for v in &plan.violations {
            self.line(format!("warning: {v}"));
        }
        Ok(plan)
    }

    fn target_spec(&self, plan: &PeelingPlan) -> TargetSpec {
        match &self.s.t_target {
            Some(t) => TargetSpec::Explicit(t.clone()),
            None => TargetSpec::Random {
                distinct: self.s.distinct_values.unwrap_or(plan.rounds[0].streams),
            },
        }
    }

    fn channel(&mut self, plan: &PeelingPlan) -> Result<ExtendedChannel, CliError> {
        let (k, n) = (
            self.s.network.num_transmitters(),
            self.s.network.num_receivers(),
        );
        let ch = if let Some(path) = self.s.channel.clone() {
            let text = std::fs::read_to_string(&path).map_err(|e| {
                CliError::Input(format!(
                    "[channel-core] cannot read {}: {e}",
                    path.display()
                ))
            })?;
            let ch = ExtendedChannel::from_dump(&text, self.s.bounds)?;
            if ch.tau() != plan.extension || ch.num_transmitters() != k || ch.num_receivers() != n {
                return Err(CliError::Input(format!(
                    "[channel-core] {} holds a {}-slot {}x{} channel, scenario needs {}-slot {k}x{n}",
                    path.display(),
                    ch.tau(),
                    ch.num_transmitters(),
                    ch.num_receivers(),
                    plan.extension
                )));
            }
            self.line(format!("channel: loaded from {}", path.display()));
            ch
        } else if self.generic {
            self.line("channel: generic random");
            random_channel(plan.extension, k, n, self.s.seed, self.s.bounds)?
        } else {
            self.line("channel: aided synthesis");
            let spec = self.target_spec(plan);
            synthesize_plan_channel(&self.s.network, plan, &spec, self.s.seed, self.s.bounds)
                .map_err(|e| self.attach(e))?
        };
        Ok(ch)
    }

    fn design(&mut self, plan: &PeelingPlan, ch: &ExtendedChannel) -> Result<PlanDesign, CliError> {
        let design = if self.generic {
            design_plan_forced(ch, plan, self.s.eps, self.s.seed)?
        } else {
            design_plan(ch, plan, self.s.eps, self.s.seed).map_err(|e| self.attach(e))?
        };
        for (i, r) in design.rounds.iter().enumerate() {
            let feasible = if r.verdict.feasible {
                "feasible"
            } else {
                "infeasible"
            };
            self.line(format!(
                "round {}: {} conditions, {feasible} ({}), blocks {:?}",
                i + 1,
                r.conditions.len(),
                r.verdict.reason,
                r.verdict.partition.sizes()
            ));
        }
        Ok(design)
    }

    fn beamformers(
        &mut self,
        plan: &PeelingPlan,
        ch: &ExtendedChannel,
    ) -> Result<(BeamformingSet, bool), CliError> {
        if let Some(path) = self.s.beamformers.clone() {
            let text = std::fs::read_to_string(&path).map_err(|e| {
                CliError::Input(format!("[ia-design] cannot read {}: {e}", path.display()))
            })?;
            let v = BeamformingSet::from_dump(&text, self.s.network.num_transmitters())?;
            if v.tau() != ch.tau() {
                return Err(CliError::Input(format!(
                    "[ia-design] beamformers span {} slots, channel has {}",
                    v.tau(),
                    ch.tau()
                )));
            }
            self.line(format!("beamformers: loaded from {}", path.display()));
            return Ok((v, true));
        }
        let design = self.design(plan, ch)?;
        let feasible = design.feasible();
        Ok((design.beamformers, feasible))
    }

    fn alignment(&mut self, ch: &ExtendedChannel, v: &BeamformingSet) -> AlignmentReport {
        let report = verify_alignment(ch, &self.s.network, v);
        self.line(report.to_string());
        report
    }

    fn simulate(&mut self, ch: &ExtendedChannel, v: &BeamformingSet) -> Result<(), CliError> {
        let points = sweep(ch, &self.s.network, v, &self.s.snr_db).map_err(|e| self.attach(e))?;
        let csv = rates_csv(&points);
        if self.out.is_none() {
            self.report.push_str(&csv);
        }
        self.write("rates.csv", &csv)?;
        let slope = dof_slope_from_points(&points)?;
        self.line(format!("dof_estimate={:.6}", slope.estimate));
        Ok(())
    }
}

fn dof_line(d: &DoFAssignment, class: NetworkClass) -> String {
    format!(
        "d = {d}, total = {}, class = {class}",
        format_rational(&d.total)
    )
}

fn cmd_dof(run: &mut Run) -> Result<(), CliError> {
    let (d, dual, class) = run.optimum()?;
    run.line(run.s.network.to_string());
    run.line(dof_line(&d, class));
    let multipliers: Vec<String> = dual
        .receiver_multipliers
        .iter()
        .map(|(j, m)| format!("{}:{}", j + 1, format_rational(m)))
        .collect();
    run.line(format!(
        "dual receiver multipliers = {}",
        multipliers.join(" ")
    ));
    run.line(format!("dual value = {}", format_rational(&dual.value)));
    let kkt = verify_kkt(&build_lp(&run.s.network), &d, &dual);
    run.line(format!(
        "kkt = {}",
        if kkt.holds() { "holds" } else { "fails" }
    ));
    let report = run.report.clone();
    run.write("dof.txt", &report)
}

fn cmd_classify(run: &mut Run) -> Result<(), CliError> {
    let (d, _, class) = run.optimum()?;
    let probe = optimal_face_probe(&build_lp(&run.s.network), &d)?;
    run.line(format!("class = {class}"));
    run.line(format!("unique optimum = {}", probe.unique));
    run.line(format!("top two equal = {}", probe.top_two_equal));
    run.line(format!(
        "max component = {}",
        format_rational(&probe.max_component)
    ));
    Ok(())
}

fn cmd_conditions(run: &mut Run) -> Result<(), CliError> {
    let plan = run.plan()?;
    run.line(format!("extension = {}", plan.extension));
    for (i, round) in plan.rounds.iter().enumerate() {
        let members: Vec<String> = (0..round.active.len())
            .filter(|&t| round.active[t])
            .map(|t| (t + 1).to_string())
            .collect();
        run.line(format!(
            "round {}: {} streams on transmitters {}; {} conditions",
            i + 1,
            round.streams,
            members.join(","),
            round.templates.len()
        ));
        for t in &round.templates {
            run.line(format!("  {t}"));
        }
    }
    run.line(format!("conditions = {}", plan.num_conditions()));
    Ok(())
}

fn cmd_synth(run: &mut Run) -> Result<(), CliError> {
    let plan = run.plan()?;
    let ch = run.channel(&plan)?;
    run.write("channel.txt", &ch.to_dump())?;
    let design = run.design_report_only(&plan, &ch)?;
    if !design {
        return Err(run.fail("[channel-aiding] aiding conditions are not satisfied"));
    }
    Ok(())
}

impl Run {
    /// Verifies each round's conditions and reports, without designing.
    fn design_report_only(
        &mut self,
        plan: &PeelingPlan,
        ch: &ExtendedChannel,
    ) -> Result<bool, CliError> {
        let forced = design_plan_forced(ch, plan, self.s.eps, self.s.seed)?;
        let mut all = true;
        self.line(format!("extension = {}", plan.extension));
        for (i, r) in forced.rounds.iter().enumerate() {
            all &= r.verdict.feasible;
            self.line(format!(
                "round {}: {} conditions, {} ({})",
                i + 1,
                r.conditions.len(),
                if r.verdict.feasible {
                    "feasible"
                } else {
                    "infeasible"
                },
                r.verdict.reason
            ));
        }
        Ok(all)
    }
}

fn cmd_design(run: &mut Run) -> Result<(), CliError> {
    let plan = run.plan()?;
    let ch = run.channel(&plan)?;
    let design = run.design(&plan, &ch)?;
    run.write("beamformers.txt", &design.beamformers.to_dump())?;
    if !design.feasible() {
        return Err(run.fail("[channel-aiding] aiding conditions are not satisfied"));
    }
    Ok(())
}

fn cmd_verify(run: &mut Run) -> Result<(), CliError> {
    let plan = run.plan()?;
    let ch = run.channel(&plan)?;
    let (v, _) = run.beamformers(&plan, &ch)?;
    if !run.alignment(&ch, &v).all_decodable() {
        return Err(run.fail("[ia-design] some receiver cannot decode"));
    }
    Ok(())
}

fn cmd_simulate(run: &mut Run) -> Result<(), CliError> {
    let plan = run.plan()?;
    let ch = run.channel(&plan)?;
    let (v, _) = run.beamformers(&plan, &ch)?;
    run.simulate(&ch, &v)
}

fn cmd_pipeline(run: &mut Run) -> Result<(), CliError> {
    let (d, _, class) = run.optimum()?;
    run.line(run.s.network.to_string());
    run.line(dof_line(&d, class));
    let plan = run.plan()?;
    run.line(format!(
        "extension = {}, rounds = {}, conditions = {}",
        plan.extension,
        plan.rounds.len(),
        plan.num_conditions()
    ));
    let ch = run.channel(&plan)?;
    let (v, feasible) = run.beamformers(&plan, &ch)?;
    run.line(format!(
        "feasible = {}",
        if feasible { "yes" } else { "no" }
    ));
    let decodable = run.alignment(&ch, &v).all_decodable();
    if decodable {
        run.simulate(&ch, &v)?;
    }
    run.write("channel.txt", &ch.to_dump())?;
    run.write("beamformers.txt", &v.to_dump())?;
    let report = run.report.clone();
    run.write("report.txt", &report)?;
    if !feasible || !decodable {
        return Err(run.fail("[ia-design] perfect alignment not achieved"));
    }
    Ok(())
}

fn load_stream(run: &Run) -> Result<ExtendedChannel, CliError> {
    let path =
        run.s.stream_file.clone().ok_or_else(|| {
            CliError::Input("[channel-aiding] scenario has no stream_file".into())
        })?;
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Input(format!(
            "[channel-aiding] cannot read {}: {e}",
            path.display()
        ))
    })?;
    if text.trim().is_empty() {
        return Err(AidingError::EmptyStream.into());
    }
    Ok(ExtendedChannel::from_dump(&text, run.s.bounds)?)
}

/// `epsilon,match_rate,worst_residual` rows for the scenario's tolerance list.
pub fn match_csv(s: &Scenario, stream: &ExtendedChannel) -> Result<String, CliError> {
    let mut csv = String::from("epsilon,match_rate,worst_residual\n");
    let budget = s.budget.unwrap_or(usize::MAX);
    for &eps in &s.eps_match {
        let r = match_slots(stream, &s.network, s.n, eps, budget)?;
        writeln!(csv, "{eps},{:.6},{:.3e}", r.match_rate, r.worst_residual).unwrap();
    }
    Ok(csv)
}

fn cmd_match(run: &mut Run) -> Result<(), CliError> {
    let stream = load_stream(run)?;
    let csv = match_csv(&run.s, &stream)?;
    run.report.push_str(&csv);
    run.write("match.csv", &csv)
}

/// Slot stream of the scenario's kind, length and seed.
pub fn make_stream(s: &Scenario) -> Result<ExtendedChannel, CliError> {
    let (k, n) = (s.network.num_transmitters(), s.network.num_receivers());
    if s.slots == 0 {
        return Err(CliError::Input(
            "[channel-aiding] slots must be positive".into(),
        ));
    }
    Ok(match s.stream {
        StreamKind::Quantized => quantized_stream(s.slots, k, n, s.levels, s.seed),
        StreamKind::Continuous => random_channel(s.slots, k, n, s.seed, s.bounds)?,
        StreamKind::Constant => constant_stream(s.slots, k, n, s.seed, s.bounds)?,
    })
}

/// Writes to `stream_file` when set, else to `out/stream.txt`, else stdout.
fn cmd_stream(run: &mut Run) -> Result<(), CliError> {
    let stream = make_stream(&run.s)?;
    let dump = stream.to_dump();
    if let Some(path) = run.s.stream_file.clone() {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| CliError::Input(format!("[cli] bad stream_file {}", path.display())))?;
        let written = write_atomic(&dir, name, &dump)?;
        run.line(format!("slots = {}", stream.tau()));
        run.line(format!("wrote {}", written.display()));
        Ok(())
    } else if run.out.is_some() {
        run.line(format!("slots = {}", stream.tau()));
        run.write("stream.txt", &dump)
    } else {
        run.report.push_str(&dump);
        Ok(())
    }
}

/// Runs one command and returns its report.
pub fn execute(command: Command, opts: &Options) -> Result<String, CliError> {
    let mut run = Run::new(opts)?;
    match command {
        Command::Dof => cmd_dof(&mut run),
        Command::Classify => cmd_classify(&mut run),
        Command::Conditions => cmd_conditions(&mut run),
        Command::Synth => cmd_synth(&mut run),
        Command::Design => cmd_design(&mut run),
        Command::Verify => cmd_verify(&mut run),
        Command::Simulate => cmd_simulate(&mut run),
        Command::Pipeline => cmd_pipeline(&mut run),
        Command::Match => cmd_match(&mut run),
        Command::Stream => cmd_stream(&mut run),
    }?;
    Ok(run.report)
}
