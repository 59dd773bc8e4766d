//! Load a CSV, inspect the inferred schema and decode the encoding back.
//!
//! `cargo run --example load_csv`

use fan::data::{load_csv, ColumnKind, LoadOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("people.csv");
    std::fs::write(
        &path,
        "age,income,city,sex\n\
         34,52000,leeds,f\n\
         51,61000,york,m\n\
         29,?,leeds,f\n\
         46,48000,hull,m\n\
         38,57000,york,\n\
         62,70500,hull,f\n",
    )?;

    let ds = load_csv(&path, "sex", &LoadOptions::default())?;
    println!("rows kept {}, dropped {}", ds.n_rows(), ds.dropped_rows);
    for col in &ds.schema.columns {
        let kind = match &col.kind {
            ColumnKind::Numeric { mean, std } => format!("numeric (mean {mean:.1}, std {std:.1})"),
            ColumnKind::Categorical { levels } => format!("categorical {levels:?}"),
            ColumnKind::Constant { value } => format!("constant {value}"),
        };
        println!("  {:<8} {kind}", col.name);
    }
    println!("encoded features {:?}", ds.schema.feature_names());
    println!("protected classes {}", ds.protected.n_classes());
    println!(
        "split: {} train, {} validation",
        ds.split.train.len(),
        ds.split.validation.len()
    );

    let table = ds.decode(ds.x.view(), true)?;
    println!("decoded header {:?}", table.header);
    for row in &table.rows {
        println!("  {row:?}");
    }
    Ok(())
}
