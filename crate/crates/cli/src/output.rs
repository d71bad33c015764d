use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use phasesync::io::fmt12;
use phasesync::Result;
use serde::Serialize;

pub fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// `t` followed by one column per agent output, `{prefix}{agent}_{channel}`.
pub fn signal_header(prefix: &str, n: usize, m: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((1..=n).flat_map(|i| (1..=m).map(move |k| format!("{prefix}{i}_{k}"))))
        .collect()
}

pub fn signal_rows<'a>(t: &'a [f64], y: &'a [Vec<f64>]) -> impl Iterator<Item = Vec<String>> + 'a {
    t.iter().zip(y).map(|(t, row)| std::iter::once(fmt12(*t)).chain(row.iter().map(|v| fmt12(*v))).collect())
}

/// Gnuplot script plotting both CSVs, which it expects next to itself.
pub fn write_plot_script(path: &Path, columns: usize) -> Result<()> {
    let script = format!(
        "set datafile separator ','\n\
         set key autotitle columnhead outside\n\
         set xlabel 't'\n\
         set multiplot layout 2,1\n\
         set ylabel 'y'\n\
         plot for [i=2:{columns}] 'trajectory.csv' using 1:i with lines\n\
         set ylabel 'y - mean(y)'\n\
         plot for [i=2:{columns}] 'disagreement.csv' using 1:i with lines\n\
         unset multiplot\n"
    );
    std::fs::write(path, script)?;
    Ok(())
}

pub fn in_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
