//! CSV tables and the summary verdict file.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

/// A CSV table held in memory until the run finishes.
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal form, so identical runs give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub values: toml::Table,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn value(&mut self, key: &str, v: impl Into<toml::Value>) {
        self.values.insert(key.into(), v.into());
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check { name: name.into(), pass, detail });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write(&self, dir: &Path, header: toml::Table) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for t in &self.tables {
            t.write(dir)?;
        }
        let mut summary = header;
        summary.insert("verdict".into(), (if self.passed() { "PASS" } else { "FAIL" }).into());
        summary.insert("values".into(), toml::Value::Table(self.values.clone()));
        let checks: Vec<toml::Value> = self
            .checks
            .iter()
            .map(|c| {
                let mut t = toml::Table::new();
                t.insert("name".into(), c.name.clone().into());
                t.insert("pass".into(), c.pass.into());
                t.insert("detail".into(), c.detail.clone().into());
                toml::Value::Table(t)
            })
            .collect();
        summary.insert("check".into(), toml::Value::Array(checks));
        let path = dir.join("summary.toml");
        fs::write(&path, toml::to_string(&summary)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
