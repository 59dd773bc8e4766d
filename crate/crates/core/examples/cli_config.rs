//! Run the command-line front end in-process from a config file.
//!
//! `cargo run --release --example cli_config`

use fan::data::Table;
use fan::synthetic::{planted_table, PlantedConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let (header, rows) = planted_table(&PlantedConfig {
        n: 400,
        ..Default::default()
    });
    let input = dir.path().join("planted.csv");
    Table { header, rows }.write_csv(&input, b',')?;

    let out_dir = dir.path().join("run");
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        format!(
            "input = {}\nprotected = protected\noutput = {}\n\
             c = 3\nadversary_hidden = 12\nadversary_lr = 0.003\n\
             max_epochs = 800\naudit_period = 400\naudit_runs = 1\naudit_epochs = 500\n",
            input.display(),
            out_dir.display()
        ),
    )?;

    let mut out = Vec::new();
    let mut err = Vec::new();
    let args = ["fan", "debias", "--config", config.to_str().unwrap()];
    let code = fan::cli::run(args, &mut out, &mut err);
    print!("{}", String::from_utf8_lossy(&out));
    eprint!("{}", String::from_utf8_lossy(&err));
    println!("exit code {code}");

    let mut names: Vec<String> = std::fs::read_dir(&out_dir)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    names.sort();
    println!("run directory: {names:?}");
    println!("--- manifest.txt ---");
    print!("{}", std::fs::read_to_string(out_dir.join("manifest.txt"))?);
    Ok(())
}
