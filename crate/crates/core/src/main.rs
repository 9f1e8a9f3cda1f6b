use clap::Parser;
use swav::cli::{execute, record_failure, Cli};

fn main() -> anyhow::Result<()> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let rec = serde_json::json!({ "error": "usage", "message": e.to_string().trim() });
                eprintln!("{rec}");
            }
            e.exit()
        }
    };
    if let Err(err) = execute(&cli) {
        let rec = record_failure(&cli, &err);
        eprintln!("{}", serde_json::to_string(&rec)?);
        return Err(anyhow::Error::new(err).context(format!("swav {} failed", cli.command.name())));
    }
    Ok(())
}
