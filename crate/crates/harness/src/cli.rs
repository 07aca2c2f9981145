//! The `sartrack` command line.

use std::io::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sartrack_core::control::{error_rate_model, tune_pd};
use sartrack_core::range::{
    fit_calibration, pinhole_pixels, pinhole_samples, torso_length_cm, DEFAULT_TORSO_RATIO,
};
use sartrack_core::sim::{Simulation, Summary};
use sartrack_core::sysid::{
    fit_first_order, generate_excitation, simulate_model, ExcitationPattern, FirstOrderModel,
    TelemetrySeries,
};
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::atomic::write_atomic;
use crate::gateway::{replay, Gateway, GatewayConfig};
use crate::protocol::RecordedInput;
use crate::scenario_file::{load_scenario, LoadedScenario};
use crate::sysid_csv::{format_series, parse_series};
use crate::telemetry_csv::{format_telemetry, parse_telemetry};

/// Environment variable holding the log filter, e.g. `debug` or
/// `sartrack_harness=trace`.
pub const LOG_ENV: &str = "SARTRACK_LOG";

#[derive(Debug, Parser)]
#[command(name = "sartrack", version, about = "Search-and-rescue UAV tracking simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a first-order model to a `t,u,v` log, or to generated data.
    Sysid(SysidArgs),
    /// Compute PD gains for a first-order model.
    Tune(TuneArgs),
    /// Fit the quadratic range calibration against the pinhole model.
    Calibrate(CalibrateArgs),
    /// Run a scenario headless and write telemetry.
    Run(RunArgs),
    /// Run a scenario in real time behind the websocket gateway.
    Serve(ServeArgs),
    /// Re-run a recorded live session offline.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SysidArgs {
    /// Telemetry CSV with header `t,u,v`.
    #[arg(required_unless_present = "generate", conflicts_with = "generate")]
    pub input: Option<PathBuf>,
    /// Generate square-wave data from `K=<gain> tau=<seconds>` instead.
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    pub generate: Vec<String>,
    /// Output noise standard deviation for generated data.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 20.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.02)]
    pub dt: f64,
    #[arg(long, default_value_t = 4.0)]
    pub period: f64,
    #[arg(long, default_value_t = 0.8)]
    pub amplitude: f64,
    /// Write the generated data as CSV.
    #[arg(long, value_name = "PATH")]
    pub write_data: Option<PathBuf>,
    /// Write the fitted model as TOML.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Plant gain, output units per command unit.
    #[arg(long)]
    pub gain: f64,
    /// Plant time constant, seconds.
    #[arg(long)]
    pub tau: f64,
    /// Requested 2% settling time, seconds.
    #[arg(long)]
    pub settle: f64,
    #[arg(long, default_value_t = 1.0)]
    pub damping: f64,
    /// Error units per plant output unit (100 for meters to centimeters).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 700.0)]
    pub focal: f64,
    /// Assumed person height, centimeters.
    #[arg(long, default_value_t = 180.0)]
    pub height: f64,
    #[arg(long, default_value_t = DEFAULT_TORSO_RATIO)]
    pub torso_ratio: f64,
    #[arg(long, default_value_t = 150.0)]
    pub min_cm: f64,
    #[arg(long, default_value_t = 350.0)]
    pub max_cm: f64,
    #[arg(long, default_value_t = 11)]
    pub samples: usize,
    /// Write `x_px,y_cm_fit,y_cm_true` rows here.
    #[arg(long, value_name = "PATH")]
    pub table: Option<PathBuf>,
    /// Write the coefficients as a `[calibration.coefficients]` TOML table.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    /// Simulated seconds; defaults to the scenario's duration.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Telemetry CSV path.
    #[arg(long, short, default_value = "telemetry.csv")]
    pub output: PathBuf,
    /// Summary JSON path; the summary is always printed.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Stop after this many simulated seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Write the session (inputs with their ticks) as JSON for `replay`.
    #[arg(long, value_name = "PATH")]
    pub record: Option<PathBuf>,
    /// Write the session telemetry CSV.
    #[arg(long, value_name = "PATH")]
    pub telemetry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub scenario: PathBuf,
    /// Session file written by `serve --record`.
    pub session: PathBuf,
    #[arg(long, short, default_value = "replay.csv")]
    pub output: PathBuf,
}

pub const SESSION_SCHEMA: &str = "sartrack.session/1";

/// A recorded live session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub schema: String,
    pub scenario: String,
    pub ticks: u64,
    pub inputs: Vec<RecordedInput>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sysid(a) => sysid(a),
        Command::Tune(a) => tune(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Run(a) => run_scenario(a),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay_session(a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("cannot write {}", path.display()))
}

/// Parses `K=1.2 tau=0.4` (keys are case-insensitive).
pub fn parse_generate_spec(items: &[String]) -> Result<FirstOrderModel> {
    let (mut gain, mut tau) = (None, None);
    for item in items {
        for part in item.split_whitespace() {
            let (key, value) = part
                .split_once('=')
                .with_context(|| format!("expected KEY=VALUE, got {part:?}"))?;
            let value: f64 = value
                .parse()
                .with_context(|| format!("{key}: not a number: {value:?}"))?;
            match key.to_ascii_lowercase().as_str() {
                "k" | "gain" => gain = Some(value),
                "tau" => tau = Some(value),
                _ => bail!("unknown key {key:?}; expected K and tau"),
            }
        }
    }
    let gain = gain.context("missing K=<gain>")?;
    let tau = tau.context("missing tau=<seconds>")?;
    Ok(FirstOrderModel::new(gain, tau)?)
}

/// Square-wave identification data for `model`, with optional output noise.
pub fn generate_series(model: &FirstOrderModel, a: &SysidArgs) -> Result<TelemetrySeries> {
    let u = generate_excitation(ExcitationPattern::SquareWave, a.amplitude, a.period, a.duration, a.dt)?;
    let mut v = simulate_model(model, &u, a.dt, 0.0);
    ensure!(a.noise >= 0.0, "noise must be non-negative");
    if a.noise > 0.0 {
        let normal = Normal::new(0.0, a.noise)?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        for x in &mut v {
            *x += normal.sample(&mut rng);
        }
    }
    Ok(TelemetrySeries::new(a.dt, u, v)?)
}

fn sysid(a: SysidArgs) -> Result<()> {
    let series = if a.generate.is_empty() {
        let path = a.input.as_deref().expect("clap requires an input");
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        parse_series(&text).with_context(|| path.display().to_string())?
    } else {
        let model = parse_generate_spec(&a.generate)?;
        let series = generate_series(&model, &a)?;
        if let Some(p) = &a.write_data {
            write(p, &format_series(&series))?;
        }
        series
    };
    let (model, fit) = fit_first_order(&series)?;
    let fit_text = fit.fit_percent.map_or("undefined".to_string(), |f| format!("{f:.2}"));
    println!("K = {:.6}", model.gain);
    println!("tau = {:.6}", model.tau);
    println!("fit_percent = {fit_text}");
    if let Some(p) = &a.report {
        let mut report = format!(
            "gain = {}\ntau = {}\nresidual_rms = {}\nsamples = {}\ndt = {}\n",
            model.gain,
            model.tau,
            fit.residual_rms,
            series.len(),
            series.dt()
        );
        if let Some(f) = fit.fit_percent {
            report.push_str(&format!("fit_percent = {f}\n"));
        }
        write(p, &report)?;
    }
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    let model = FirstOrderModel::new(a.gain, a.tau)?;
    let design = error_rate_model(&model, a.scale);
    let gains = tune_pd(&design, a.settle, a.damping)?;
    println!("kp = {}", gains.kp);
    println!("kd = {}", gains.kd);
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    ensure!(a.samples >= 3, "at least 3 samples are needed");
    ensure!(a.max_cm > a.min_cm && a.min_cm > 0.0, "need 0 < min-cm < max-cm");
    let torso = torso_length_cm(a.height, a.torso_ratio);
    let step = (a.max_cm - a.min_cm) / (a.samples - 1) as f64;
    let ranges: Vec<f64> = (0..a.samples).map(|i| a.min_cm + step * i as f64).collect();
    let samples = pinhole_samples(a.focal, torso, ranges.iter().copied());
    let calib = fit_calibration(&samples, a.height)?;
    let max_err = calib.max_abs_error(|x| a.focal * torso / x, 1000);

    let coefficients = format!(
        "[calibration.coefficients]\nk1 = {:e}\nk2 = {:e}\nk3 = {:e}\nx_min = {}\nx_max = {}\nassumed_height_cm = {}\n",
        calib.k1, calib.k2, calib.k3, calib.x_min, calib.x_max, calib.assumed_height_cm
    );
    print!("{coefficients}");
    println!("# max abs error {max_err:.3} cm over [{:.1}, {:.1}] px", calib.x_min, calib.x_max);
    if let Some(p) = &a.output {
        write(p, &coefficients)?;
    }
    if let Some(p) = &a.table {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x_px", "y_cm_fit", "y_cm_true"])?;
        for &y in &ranges {
            let x = pinhole_pixels(a.focal, torso, y);
            w.write_record([format!("{x:.4}"), format!("{:.4}", calib.eval(x)), format!("{y:.4}")])?;
        }
        let bytes = w.into_inner().context("flushing calibration table")?;
        write_atomic(p, &bytes).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<LoadedScenario> {
    Ok(load_scenario(path)?)
}

/// Summary as written to JSON.
pub fn summary_json(s: &Summary) -> serde_json::Value {
    serde_json::json!({
        "rows": s.rows,
        "duration_s": s.duration_s,
        "distance_travelled_m": s.distance_travelled_m,
        "first_track_s": s.first_track_s,
        "convergence_s": s.convergence_s,
        "range_rms_cm": s.range_rms_cm,
        "in_band_fraction": s.in_band_fraction,
        "event_count": s.events.len(),
        "events": s.events.iter().map(|(t, e)| serde_json::json!({"t": t, "event": e})).collect::<Vec<_>>(),
    })
}

fn run_scenario(a: RunArgs) -> Result<()> {
    let LoadedScenario { scenario, registry } = load(&a.scenario)?;
    let mut sim = Simulation::with_registry(&scenario, registry)?;
    let duration = a.duration.unwrap_or(scenario.duration_s);
    ensure!(duration >= 0.0, "duration must be non-negative");
    info!(scenario = %scenario.name, duration, "running");
    let rows: Vec<_> = sim.run_for(duration).iter().map(|r| r.log_row()).collect();
    let csv = format_telemetry(&rows);
    write(&a.output, &csv)?;

    // Statistics come from the file contents so they can be recomputed.
    let parsed = parse_telemetry(&csv)?;
    let summary = Summary::from_rows(&parsed, scenario.mission.track_setpoint_cm);
    let json = serde_json::to_string_pretty(&summary_json(&summary))?;
    if let Some(p) = &a.summary {
        write(p, &(json.clone() + "\n"))?;
    }
    println!("{json}");
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    ensure!(a.speed > 0.0 && a.speed.is_finite(), "speed must be positive");
    let LoadedScenario { scenario, registry } = load(&a.scenario)?;
    let sim = Simulation::with_registry(&scenario, registry)?;
    let rt = tokio::runtime::Runtime::new()?;
    let log = rt.block_on(async {
        let config = GatewayConfig {
            speed: Some(a.speed),
            max_duration_s: a.duration,
        };
        let gateway = Gateway::start(sim, config, SocketAddr::new(a.bind, a.port))
            .await
            .with_context(|| format!("cannot bind {}:{}", a.bind, a.port))?;
        println!("listening on ws://{}/ws", gateway.local_addr());
        std::io::stdout().flush().ok();
        let stop = gateway.stop_flag();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                info!("interrupt received, stopping");
                stop.store(true, std::sync::atomic::Ordering::Relaxed);
            }
        });
        anyhow::Ok(gateway.join().await)
    })?;
    if let Some(p) = &a.record {
        let session = SessionFile {
            schema: SESSION_SCHEMA.into(),
            scenario: scenario.name.clone(),
            ticks: log.telemetry.len() as u64,
            inputs: log.inputs,
        };
        write(p, &(serde_json::to_string_pretty(&session)? + "\n"))?;
    }
    if let Some(p) = &a.telemetry {
        write(p, &format_telemetry(&log.telemetry))?;
    }
    Ok(())
}

pub fn load_session(path: &Path) -> Result<SessionFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let session: SessionFile =
        serde_json::from_str(&text).with_context(|| format!("{}: invalid session file", path.display()))?;
    ensure!(
        session.schema == SESSION_SCHEMA,
        "{}: unsupported schema {:?}, expected {SESSION_SCHEMA:?}",
        path.display(),
        session.schema
    );
    Ok(session)
}

fn replay_session(a: ReplayArgs) -> Result<()> {
    let LoadedScenario { scenario, registry } = load(&a.scenario)?;
    let session = load_session(&a.session)?;
    let sim = Simulation::with_registry(&scenario, registry)?;
    let rows = replay(sim, &session.inputs, session.ticks).map_err(anyhow::Error::msg)?;
    write(&a.output, &format_telemetry(&rows))?;
    println!("replayed {} ticks with {} inputs", session.ticks, session.inputs.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_spec_parsing() {
        let m = parse_generate_spec(&["K=1.2".into(), "tau=0.4".into()]).unwrap();
        assert_eq!((m.gain, m.tau), (1.2, 0.4));
        let m = parse_generate_spec(&["gain=2 TAU=0.1".into()]).unwrap();
        assert_eq!((m.gain, m.tau), (2.0, 0.1));
        assert!(parse_generate_spec(&["K=1.2".into()]).is_err());
        assert!(parse_generate_spec(&["K=x".into(), "tau=1".into()]).is_err());
        assert!(parse_generate_spec(&["K=1".into(), "tau=-1".into()]).is_err());
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from(["sartrack", "sysid", "--generate", "K=1.2", "tau=0.4"]).unwrap();
        match cli.command {
            Command::Sysid(a) => assert_eq!(a.generate, ["K=1.2", "tau=0.4"]),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["sartrack", "sysid"]).is_err());
        assert!(Cli::try_parse_from(["sartrack", "run"]).is_err());
    }
}
