//! Command-line front end for the gateway. [`run`] is the whole program;
//! `main` only wires it to the process.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Output;
use config::{Config, Format, Overrides};
pub use error::{exit, CliError};

/// Parses `argv`, runs the command and returns the exit status.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    return exit::OK;
                }
                _ => exit::USAGE,
            };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    let overrides = Overrides {
        home: cli.home.clone(),
        actor: cli.actor.clone(),
        token: cli.token.clone(),
        format: cli.format,
        public_backend: cli.public_backend.clone(),
        private_store: cli.private_store.clone(),
        modulus_bits: match &cli.command {
            Command::Init(a) => a.modulus_bits,
            _ => None,
        },
        offline: cli.offline,
    };
    let cfg = match Config::resolve(&overrides) {
        Ok(cfg) => cfg,
        Err(e) => return report_error(&e, cli.format.unwrap_or_default(), stderr),
    };
    match dispatch(&cfg, &cli.command, stderr) {
        Ok(out) => {
            emit(&out, cfg.format, stdout);
            out.code
        }
        Err(e) => report_error(&e, cfg.format, stderr),
    }
}

fn dispatch(cfg: &Config, command: &Command, stderr: &mut dyn Write) -> Result<Output, CliError> {
    match command {
        Command::Init(a) => commands::init(cfg, a),
        Command::Admin(c) => commands::admin(cfg, c),
        Command::RoleMgr(c) => commands::rolemgr(cfg, c),
        Command::Owner(c) => commands::owner(cfg, c),
        Command::User(c) => commands::user(cfg, c),
        Command::Override(c) => commands::override_cmd(cfg, c),
        Command::Audit(c) => commands::audit_cmd(cfg, c),
        Command::Bench(c) => commands::bench_cmd(cfg, c),
        Command::Integrity(c) => commands::integrity_cmd(c),
        Command::Serve { listen } => commands::serve(cfg, listen, stderr),
    }
}

fn emit(out: &Output, format: Format, stdout: &mut dyn Write) {
    match format {
        Format::Json => {
            let _ = writeln!(stdout, "{}", out.value);
        }
        Format::Text => match &out.raw {
            Some(bytes) => {
                let _ = stdout.write_all(bytes);
            }
            None if out.text.is_empty() => {}
            None => {
                let _ = writeln!(stdout, "{}", out.text);
            }
        },
    }
    let _ = stdout.flush();
}

fn report_error(err: &CliError, format: Format, stderr: &mut dyn Write) -> i32 {
    let code = err.exit_code();
    match format {
        Format::Json => {
            let body = serde_json::json!({
                "error": err.code(),
                "message": err.to_string(),
                "exit_code": code,
            });
            let _ = writeln!(stderr, "{body}");
        }
        Format::Text => {
            let _ = writeln!(stderr, "error: {err}");
        }
    }
    code
}
