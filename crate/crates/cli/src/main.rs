use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use csma_partite::montecarlo::{default_workers, ks_statistic, sample_hitting_time_with, sample_limit_law, Cdf, ExpCdf};
use csma_partite::spectral::{absorption_spectrum_from, spectrum_csv};
use csma_partite::{
    asymptotic_mean, escape_params, mean_hitting_time, run_sweep, run_validation, stationary_full, AggState, Error,
    Exec, HittingQuery, LimitLaw, PartiteNetwork, SweepSpec, SCHEMA_VERSION,
};

#[derive(Parser)]
#[command(name = "csma-partite", version, about = "CSMA activity on complete partite interference graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct NetArgs {
    /// Component sizes, e.g. `3,2`.
    #[arg(long, conflicts_with = "network")]
    sizes: Option<String>,
    /// Activation rate.
    #[arg(long, conflicts_with = "network")]
    nu: Option<f64>,
    /// TOML file with `sizes` and `nu`.
    #[arg(long)]
    network: Option<PathBuf>,
}

impl NetArgs {
    fn build(&self) -> Result<PartiteNetwork, Error> {
        self.build_with_default_nu(None)
    }

    fn build_with_default_nu(&self, fallback: Option<f64>) -> Result<PartiteNetwork, Error> {
        if let Some(path) = &self.network {
            return PartiteNetwork::from_file(path);
        }
        let sizes = self
            .sizes
            .as_deref()
            .ok_or_else(|| Error::Input("either --sizes or --network is required".into()))?;
        let nu = self
            .nu
            .or(fallback)
            .ok_or_else(|| Error::Input("--nu is required with --sizes".into()))?;
        PartiteNetwork::new(csma_partite::model::parse_sizes(sizes)?, nu)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Stationary law as CSV.
    Stationary {
        #[command(flatten)]
        net: NetArgs,
        /// Per-node states instead of aggregated ones.
        #[arg(long)]
        full: bool,
    },
    /// Mean first-passage time between two aggregated states.
    Hitting {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        from: AggState,
        #[arg(long)]
        to: AggState,
        /// Exact mean from a linear solve (the default).
        #[arg(long, group = "mode")]
        exact: bool,
        /// Leading-order law in `ν`.
        #[arg(long, group = "mode")]
        asymptotic: bool,
        /// Simulate this many first passages.
        #[arg(long, group = "mode", value_name = "N", requires = "seed")]
        simulate: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write the samples as CSV `index,value`.
        #[arg(long, requires = "simulate")]
        samples_csv: Option<PathBuf>,
    },
    /// Absorption rates of a killed chain and their products with the mean time.
    Spectrum {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value = "0")]
        absorb: AggState,
        /// Start state selecting the transient class (default: any, if unique).
        #[arg(long)]
        from: Option<AggState>,
    },
    /// Mixing time with its conductance and coupling bounds, as JSON.
    Mixing {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 0.125)]
        epsilon: f64,
        /// Run single-threaded.
        #[arg(long)]
        sequential: bool,
    },
    /// `ν`-sweep from a TOML spec: CSV rows plus a power-law fit.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the fit JSON here instead of stdout.
        #[arg(long)]
        fit_json: Option<PathBuf>,
    },
    /// Limit law of the scaled transition time from branch k1 to branch k2.
    LimitLaw {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        k1: usize,
        #[arg(long)]
        k2: usize,
        /// Evaluate the distribution function at x.
        #[arg(long, conflicts_with = "sample")]
        cdf: Option<f64>,
        /// Draw this many samples from the defining random sum.
        #[arg(long, value_name = "N", requires = "seed")]
        sample: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Built-in invariant suite; exit code 0 iff every check passes.
    Validate {
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct Versioned<T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

fn versioned<T: Serialize>(body: T) -> String {
    serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })
    .expect("serializable")
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn run(cmd: Command) -> Result<bool, Error> {
    match cmd {
        Command::Stationary { net, full } => {
            let net = net.build()?;
            let csv = if full {
                stationary_full(&net)?.to_csv_with(|s| s.render(&net))
            } else {
                net.stationary_agg().to_csv()
            };
            write_or_print(None, &csv)?;
        }
        Command::Hitting {
            net,
            from,
            to,
            asymptotic,
            simulate,
            seed,
            workers,
            samples_csv,
            ..
        } => {
            let net = net.build()?;
            let q = HittingQuery::new(from, to)?;
            q.check(&net)?;
            let gen = net.generator(&[])?;
            let head = json!({
                "sizes": net.sizes(),
                "nu": net.nu(),
                "from": from.to_string(),
                "to": to.to_string(),
            });
            let mut body = head.as_object().expect("object").clone();
            if asymptotic {
                let law = asymptotic_mean(&net, q)?;
                body.insert("mode".into(), "asymptotic".into());
                body.insert("coefficient".into(), law.coefficient.into());
                body.insert("exponent".into(), law.exponent.into());
                body.insert("mean_asymptotic".into(), law.evaluate(net.nu()).into());
            } else if let Some(n) = simulate {
                let seed = seed.ok_or_else(|| Error::Input("--seed is required with --simulate".into()))?;
                let workers = workers.unwrap_or_else(default_workers);
                let exact = mean_hitting_time(&gen, q)?;
                let s = sample_hitting_time_with(&gen, q, n, seed, workers)?;
                body.insert("mode".into(), "simulate".into());
                body.insert("n".into(), n.into());
                body.insert("seed".into(), seed.into());
                body.insert("mean".into(), s.mean().into());
                body.insert("std_error".into(), s.std_error().into());
                body.insert("mean_exact".into(), exact.into());
                if n >= csma_partite::montecarlo::KS_MIN_SAMPLES {
                    let d = ks_statistic(&s.scaled(exact), &ExpCdf { rate: 1.0 })?;
                    body.insert("ks_scaled_vs_exp1".into(), d.into());
                    // the exact law is phase-type when the passage is an absorption on a line
                    let killed = net.generator(&[to])?;
                    if let Ok(pt) = absorption_spectrum_from(&killed, to, from) {
                        if (pt.mean() / exact - 1.0).abs() < 1e-9 {
                            let d = ks_statistic(&s.values, &pt)?;
                            body.insert("ks_vs_phase_type".into(), d.into());
                        }
                    }
                }
                if let Some(path) = samples_csv {
                    write_or_print(Some(&path), &s.to_csv())?;
                }
            } else {
                body.insert("mode".into(), "exact".into());
                body.insert("mean_exact".into(), mean_hitting_time(&gen, q)?.into());
            }
            write_or_print(None, &versioned(Value::Object(body)))?;
        }
        Command::Spectrum { net, absorb, from } => {
            let net = net.build()?;
            net.state_index(absorb)?;
            let gen = net.generator(&[absorb])?;
            let pt = match from {
                Some(start) => absorption_spectrum_from(&gen, absorb, start)?,
                None => csma_partite::absorption_spectrum(&gen, absorb)?,
            };
            write_or_print(None, &spectrum_csv(&pt, pt.mean()))?;
        }
        Command::Mixing {
            net,
            epsilon,
            sequential,
        } => {
            let net = net.build()?;
            let exec = if sequential { Exec::Sequential } else { Exec::Parallel };
            let report = csma_partite::mixing::mixing_report(&net, epsilon, exec)?;
            write_or_print(None, &versioned(report))?;
        }
        Command::Sweep { spec, csv, fit_json } => {
            let spec = SweepSpec::from_file(spec)?;
            let result = run_sweep(&spec, Exec::Parallel)?;
            write_or_print(csv.as_ref(), &result.csv)?;
            let prefactor = result.fit.prefactor();
            let body = json!({
                "result": result,
                "prefactor": prefactor,
                "nus": spec.nus,
            });
            write_or_print(fit_json.as_ref(), &versioned(body))?;
        }
        Command::LimitLaw {
            net,
            k1,
            k2,
            cdf,
            sample,
            seed,
        } => {
            let net = net.build_with_default_nu(Some(1.0))?;
            let params = escape_params(&net, k1, k2)?;
            let law = LimitLaw::from_params(&params);
            if let Some(n) = sample {
                let seed = seed.ok_or_else(|| Error::Input("--seed is required with --sample".into()))?;
                write_or_print(None, &sample_limit_law(&law, n, seed)?.to_csv())?;
            } else {
                let mut body = json!({
                    "sizes": net.sizes(),
                    "k1": k1,
                    "k2": k2,
                    "params": params,
                    "atom": law.atom(),
                    "continuous_rate": law.continuous_rate(),
                });
                if let Some(x) = cdf {
                    if x.is_nan() || x < 0.0 {
                        return Err(Error::Input("--cdf needs x ≥ 0".into()));
                    }
                    body["x"] = x.into();
                    body["cdf"] = Cdf::cdf(&law, x).into();
                }
                write_or_print(None, &versioned(body))?;
            }
        }
        Command::Validate { output } => {
            let report = run_validation(Exec::Parallel)?;
            let mut text = report.to_json();
            text.push('\n');
            write_or_print(output.as_ref(), &text)?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAIL {}: {} = {}", c.group, c.name, c.value);
            }
            return Ok(report.all_passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
