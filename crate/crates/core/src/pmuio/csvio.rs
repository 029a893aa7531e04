use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{PhasorTrace, PmuError, TraceMeta};
use crate::Phasor;

/// Wall-clock style rendering of a scenario-relative timestamp; the numeric
/// `time_s` column stays authoritative for parsing.
fn iso_time(t: f64) -> String {
    let total_ms = (t * 1000.0).round() as i64;
    let ms = total_ms.rem_euclid(1000);
    let s = total_ms.div_euclid(1000);
    let (h, m, sec) = (s / 3600, (s % 3600) / 60, s % 60);
    format!("2021-01-01T{:02}:{:02}:{:02}.{:03}Z", h, m, sec, ms)
}

/// Write the unified CSV layout (`time_iso, time_s, v_re, v_im, i_re, i_im,
/// freq_hz`) with full round-trip numeric precision, plus a JSON sidecar
/// carrying the per-unit bases and provenance.
pub fn write_phasor_csv(trace: &PhasorTrace, path: &Path) -> Result<(), PmuError> {
    let io_err = |source| PmuError::Io { path: path.display().to_string(), source };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let mut emit = |line: String| -> Result<(), PmuError> {
        writeln!(f, "{line}").map_err(|source| PmuError::Io { path: path.display().to_string(), source })
    };
    if let Some(digest) = &trace.meta.manifest_sha256 {
        emit(format!("# manifest_sha256 = {digest}"))?;
    }
    emit(format!("# bus = {}, branch = {}, s_base_mva = {}", trace.meta.bus, trace.meta.branch, trace.meta.s_base_mva))?;
    emit("time_iso,time_s,v_re,v_im,i_re,i_im,freq_hz".to_string())?;
    for k in 0..trace.len() {
        let t = trace.time(k);
        emit(format!(
            "{},{},{},{},{},{},{}",
            iso_time(t),
            t,
            trace.v[k].re,
            trace.v[k].im,
            trace.i[k].re,
            trace.i[k].im,
            trace.freq[k]
        ))?;
    }
    drop(f);

    let sidecar = path.with_extension("meta.json");
    let text = serde_json::to_string_pretty(&trace.meta).expect("meta serializes");
    std::fs::write(&sidecar, text)
        .map_err(|source| PmuError::Io { path: sidecar.display().to_string(), source })?;
    Ok(())
}

/// Read the unified CSV layout back. Column order is taken from the header;
/// `#` lines are ignored. The sidecar is optional.
pub fn read_phasor_csv(path: &Path) -> Result<PhasorTrace, PmuError> {
    let io_err = |source| PmuError::Io { path: path.display().to_string(), source };
    let f = BufReader::new(std::fs::File::open(path).map_err(io_err)?);
    let pname = path.display().to_string();

    let mut header: Option<Vec<String>> = None;
    let mut times = Vec::new();
    let mut v = Vec::new();
    let mut i = Vec::new();
    let mut freq = Vec::new();

    for (lineno, line) in f.lines().enumerate() {
        let line = line.map_err(|source| PmuError::Io { path: pname.clone(), source })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if header.is_none() {
            header = Some(line.split(',').map(|s| s.trim().to_string()).collect());
            continue;
        }
        let cols = header.as_ref().unwrap();
        let get = |name: &str| cols.iter().position(|c| c == name);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(PmuError::Malformed {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let parse = |name: &str| -> Result<f64, PmuError> {
            let idx = get(name).ok_or_else(|| PmuError::Malformed {
                path: pname.clone(),
                line: 1,
                msg: format!("missing column '{name}'"),
            })?;
            fields[idx].trim().parse::<f64>().map_err(|e| PmuError::Malformed {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("column '{name}': {e}"),
            })
        };
        times.push(parse("time_s")?);
        v.push(Phasor::new(parse("v_re")?, parse("v_im")?));
        i.push(Phasor::new(parse("i_re")?, parse("i_im")?));
        freq.push(if get("freq_hz").is_some() { parse("freq_hz")? } else { f64::NAN });
    }

    if times.len() < 2 {
        return Err(PmuError::Invalid(format!("{pname}: need at least 2 samples")));
    }
    let dt = times[1] - times[0];
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-9_f64.max(1e-6 * dt) {
            return Err(PmuError::Malformed {
                path: pname.clone(),
                line: k + 3,
                msg: format!("non-uniform time grid: step {} after {}", w[1] - w[0], dt),
            });
        }
    }

    let sidecar = path.with_extension("meta.json");
    let meta = match std::fs::read_to_string(&sidecar) {
        Ok(text) => serde_json::from_str::<TraceMeta>(&text)
            .map_err(|e| PmuError::Invalid(format!("{}: {e}", sidecar.display())))?,
        Err(_) => TraceMeta::default(),
    };

    let trace = PhasorTrace { dt, t0: times[0], v, i, freq, meta };
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmuio::{add_noise, NoiseSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let base = PhasorTrace {
            dt: 1e-3,
            t0: 0.0,
            v: vec![Phasor::new(1.0, 0.0); 64],
            i: vec![Phasor::new(0.61, -0.13); 64],
            freq: vec![60.0; 64],
            meta: TraceMeta { s_base_mva: 100.0, f_nominal_hz: 60.0, ..Default::default() },
        };
        // noisy values exercise the full mantissa
        let trace = add_noise(&base, &NoiseSpec { tve: 0.01, fe_hz: 5e-4, seed: 9 });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_phasor_csv(&trace, &path).unwrap();
        let back = read_phasor_csv(&path).unwrap();
        assert_eq!(trace.v, back.v, "voltage column must round trip bit-exactly");
        assert_eq!(trace.i, back.i);
        assert_eq!(trace.freq, back.freq);
        assert_eq!(back.meta.s_base_mva, 100.0);
    }

    #[test]
    fn malformed_rows_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "time_s,v_re,v_im,i_re,i_im\n0.0,1.0,0.0,0.5,0.0\n0.001,oops,0.0,0.5,0.0\n").unwrap();
        match read_phasor_csv(&path) {
            Err(PmuError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a located parse error, got {other:?}"),
        }
    }

    #[test]
    fn iso_column_rolls_over_minutes() {
        assert_eq!(iso_time(0.0), "2021-01-01T00:00:00.000Z");
        assert_eq!(iso_time(61.502), "2021-01-01T00:01:01.502Z");
        assert_eq!(iso_time(3601.0), "2021-01-01T01:00:01.000Z");
    }
}
