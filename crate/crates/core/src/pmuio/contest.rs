use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{PhasorTrace, PmuError, TraceMeta};
use crate::Phasor;

/// Knobs for the four-text-file dataset family: bus-voltage magnitudes and
/// angles plus branch-current magnitudes and angles, one channel per column,
/// first column time.
#[derive(Debug, Clone)]
pub struct ContestOptions {
    /// channel (column header) to use from the voltage files; first data
    /// column when unset
    pub v_channel: Option<String>,
    pub i_channel: Option<String>,
    /// angles are degrees unless this is set
    pub angles_in_radians: bool,
    /// magnitude divisors to reach per-unit; files already in p.u. by default
    pub v_base: f64,
    pub i_base: f64,
    pub f_nominal_hz: f64,
}

impl Default for ContestOptions {
    fn default() -> Self {
        Self {
            v_channel: None,
            i_channel: None,
            angles_in_radians: false,
            v_base: 1.0,
            i_base: 1.0,
            f_nominal_hz: 60.0,
        }
    }
}

struct ChannelFile {
    path: String,
    times: Vec<f64>,
    values: Vec<f64>,
    gaps: Vec<usize>,
}

fn detect_delimiter(line: &str) -> fn(&str) -> Vec<String> {
    fn split_on(c: char) -> impl Fn(&str) -> Vec<String> {
        move |s: &str| s.split(c).map(|x| x.trim().to_string()).collect()
    }
    if line.contains(',') {
        |s| split_on(',')(s)
    } else if line.contains('\t') {
        |s| split_on('\t')(s)
    } else if line.contains(';') {
        |s| split_on(';')(s)
    } else {
        |s| s.split_whitespace().map(|x| x.to_string()).collect()
    }
}

fn read_channel(path: &Path, channel: Option<&str>) -> Result<ChannelFile, PmuError> {
    let pname = path.display().to_string();
    let f = BufReader::new(std::fs::File::open(path).map_err(|source| PmuError::Io {
        path: pname.clone(),
        source,
    })?);

    let mut split: Option<fn(&str) -> Vec<String>> = None;
    let mut col: Option<usize> = None;
    let mut header_seen = false;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut gaps = Vec::new();

    for (lineno, line) in f.lines().enumerate() {
        let line = line.map_err(|source| PmuError::Io { path: pname.clone(), source })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let splitter = *split.get_or_insert_with(|| detect_delimiter(trimmed));
        let fields = splitter(trimmed);
        if fields.len() < 2 {
            return Err(PmuError::Malformed {
                path: pname.clone(),
                line: lineno + 1,
                msg: "need a time column and at least one channel".into(),
            });
        }
        if !header_seen {
            header_seen = true;
            // a header row is any row whose first field is not a number
            if fields[0].parse::<f64>().is_err() {
                col = Some(match channel {
                    Some(name) => fields.iter().position(|c| c == name).ok_or_else(|| {
                        PmuError::Malformed {
                            path: pname.clone(),
                            line: lineno + 1,
                            msg: format!("channel '{name}' not found in header"),
                        }
                    })?,
                    None => 1,
                });
                continue;
            }
            if channel.is_some() {
                return Err(PmuError::Malformed {
                    path: pname.clone(),
                    line: lineno + 1,
                    msg: "channel requested by name but the file has no header row".into(),
                });
            }
            col = Some(1);
        }
        let c = col.expect("column resolved");
        if c >= fields.len() {
            return Err(PmuError::Malformed {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("row has {} fields, channel column is {}", fields.len(), c),
            });
        }
        let t: f64 = fields[0].parse().map_err(|e| PmuError::Malformed {
            path: pname.clone(),
            line: lineno + 1,
            msg: format!("time column: {e}"),
        })?;
        let raw = &fields[c];
        let value = if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
            gaps.push(times.len());
            f64::NAN
        } else {
            raw.parse::<f64>().map_err(|e| PmuError::Malformed {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("channel column: {e}"),
            })?
        };
        times.push(t);
        values.push(value);
    }

    if times.len() < 2 {
        return Err(PmuError::Invalid(format!("{pname}: fewer than 2 samples")));
    }
    Ok(ChannelFile { path: pname, times, values, gaps })
}

/// Remove 2-pi jumps so consecutive samples differ by less than pi. Works in
/// place: entry `k` is still raw when visited, and its predecessor differs
/// from raw by an exact multiple of 2-pi, so the wrapped difference survives.
fn unwrap_angles(theta: &mut [f64]) {
    let two_pi = 2.0 * std::f64::consts::PI;
    for k in 1..theta.len() {
        let mut d = (theta[k] - theta[k - 1]).rem_euclid(two_pi);
        if d > std::f64::consts::PI {
            d -= two_pi;
        }
        theta[k] = theta[k - 1] + d;
    }
}

/// Combine the four files (voltage magnitude, voltage angle, current
/// magnitude, current angle) into one normalized trace. Angles are unwrapped
/// and the frequency channel is derived from the voltage angle.
pub fn parse_contest_dataset(
    v_mag_path: &Path,
    v_ang_path: &Path,
    i_mag_path: &Path,
    i_ang_path: &Path,
    opts: &ContestOptions,
) -> Result<PhasorTrace, PmuError> {
    let vm = read_channel(v_mag_path, opts.v_channel.as_deref())?;
    let va = read_channel(v_ang_path, opts.v_channel.as_deref())?;
    let im = read_channel(i_mag_path, opts.i_channel.as_deref())?;
    let ia = read_channel(i_ang_path, opts.i_channel.as_deref())?;

    let n = vm.times.len();
    for ch in [&va, &im, &ia] {
        if ch.times.len() != n {
            return Err(PmuError::Mismatch(format!(
                "{} has {} rows but {} has {}",
                ch.path,
                ch.times.len(),
                vm.path,
                n
            )));
        }
    }

    let dt = vm.times[1] - vm.times[0];
    if dt <= 0.0 {
        return Err(PmuError::Invalid(format!("{}: non-increasing time column", vm.path)));
    }
    for (k, w) in vm.times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1e-9) {
            return Err(PmuError::Malformed {
                path: vm.path.clone(),
                line: k + 2,
                msg: "non-uniform reporting interval".into(),
            });
        }
    }

    let to_rad = if opts.angles_in_radians { 1.0 } else { std::f64::consts::PI / 180.0 };
    let mut v_theta: Vec<f64> = va.values.iter().map(|a| a * to_rad).collect();
    let mut i_theta: Vec<f64> = ia.values.iter().map(|a| a * to_rad).collect();
    unwrap_angles(&mut v_theta);
    unwrap_angles(&mut i_theta);

    let mut gaps: Vec<usize> = Vec::new();
    for ch in [&vm, &va, &im, &ia] {
        gaps.extend(ch.gaps.iter().copied());
    }
    gaps.sort_unstable();
    gaps.dedup();

    let v: Vec<Phasor> = vm
        .values
        .iter()
        .zip(&v_theta)
        .map(|(m, th)| Phasor::from_polar(m / opts.v_base, *th))
        .collect();
    let i: Vec<Phasor> = im
        .values
        .iter()
        .zip(&i_theta)
        .map(|(m, th)| Phasor::from_polar(m / opts.i_base, *th))
        .collect();

    // backward-difference frequency from the unwrapped voltage angle
    let mut freq = Vec::with_capacity(n);
    freq.push(opts.f_nominal_hz);
    for k in 1..n {
        freq.push(opts.f_nominal_hz + (v_theta[k] - v_theta[k - 1]) / (2.0 * std::f64::consts::PI * dt));
    }

    let trace = PhasorTrace {
        dt,
        t0: vm.times[0],
        v,
        i,
        freq,
        meta: TraceMeta {
            s_base_mva: 0.0,
            f_nominal_hz: opts.f_nominal_hz,
            bus: String::new(),
            branch: String::new(),
            gaps,
            resampled_from_hz: None,
            frequency_derived: true,
            manifest_sha256: None,
        },
    };
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn combines_magnitude_and_angle_files() {
        let dir = tempfile::tempdir().unwrap();
        let vm = write(dir.path(), "vm.csv", "t,BUS1\n0.0,1.0\n0.1,1.0\n0.2,1.0\n");
        let va = write(dir.path(), "va.csv", "t,BUS1\n0.0,0.0\n0.1,90.0\n0.2,180.0\n");
        let im = write(dir.path(), "im.csv", "t,BR1\n0.0,0.5\n0.1,0.5\n0.2,0.5\n");
        let ia = write(dir.path(), "ia.csv", "t,BR1\n0.0,0.0\n0.1,0.0\n0.2,0.0\n");
        let tr = parse_contest_dataset(&vm, &va, &im, &ia, &ContestOptions::default()).unwrap();
        assert_eq!(tr.len(), 3);
        assert_relative_eq!(tr.v[0].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(tr.v[1].im, 1.0, epsilon = 1e-12);
        assert!(tr.meta.frequency_derived);
    }

    #[test]
    fn unwraps_degree_angles_across_the_branch_cut() {
        let dir = tempfile::tempdir().unwrap();
        // 170 -> -170 is a +20 degree step through the cut, not -340
        let vm = write(dir.path(), "vm.txt", "0.0 1.0\n0.1 1.0\n0.2 1.0\n");
        let va = write(dir.path(), "va.txt", "0.0 150.0\n0.1 170.0\n0.2 -170.0\n");
        let im = write(dir.path(), "im.txt", "0.0 1.0\n0.1 1.0\n0.2 1.0\n");
        let ia = write(dir.path(), "ia.txt", "0.0 0.0\n0.1 0.0\n0.2 0.0\n");
        let tr = parse_contest_dataset(&vm, &va, &im, &ia, &ContestOptions::default()).unwrap();
        let th: Vec<f64> = tr.v.iter().map(|v| v.arg()).collect();
        // continuous in the unwrapped sense: frequency stays near nominal
        let step = (tr.freq[2] - tr.freq[1]).abs();
        assert!(step < 1.0, "unwrap failed, implied frequency jump {step} Hz");
        assert!(th[0].to_degrees() > 140.0);
    }

    #[test]
    fn mismatched_lengths_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let vm = write(dir.path(), "vm.csv", "t,A\n0.0,1.0\n0.1,1.0\n");
        let va = write(dir.path(), "va.csv", "t,A\n0.0,0.0\n0.1,0.0\n0.2,0.0\n");
        let im = write(dir.path(), "im.csv", "t,A\n0.0,1.0\n0.1,1.0\n");
        let ia = write(dir.path(), "ia.csv", "t,A\n0.0,0.0\n0.1,0.0\n");
        assert!(matches!(
            parse_contest_dataset(&vm, &va, &im, &ia, &ContestOptions::default()),
            Err(PmuError::Mismatch(_))
        ));
    }

    #[test]
    fn bad_cells_carry_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let vm = write(dir.path(), "vm.csv", "t,A\n0.0,1.0\n0.1,bogus\n");
        let va = write(dir.path(), "va.csv", "t,A\n0.0,0.0\n0.1,0.0\n");
        let im = write(dir.path(), "im.csv", "t,A\n0.0,1.0\n0.1,1.0\n");
        let ia = write(dir.path(), "ia.csv", "t,A\n0.0,0.0\n0.1,0.0\n");
        match parse_contest_dataset(&vm, &va, &im, &ia, &ContestOptions::default()) {
            Err(PmuError::Malformed { line, path, .. }) => {
                assert_eq!(line, 3);
                assert!(path.ends_with("vm.csv"));
            }
            other => panic!("expected located error, got {other:?}"),
        }
    }

    #[test]
    fn empty_cells_become_marked_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let vm = write(dir.path(), "vm.csv", "t,A\n0.0,1.0\n0.1,\n0.2,1.0\n");
        let va = write(dir.path(), "va.csv", "t,A\n0.0,0.0\n0.1,0.0\n0.2,0.0\n");
        let im = write(dir.path(), "im.csv", "t,A\n0.0,1.0\n0.1,1.0\n0.2,1.0\n");
        let ia = write(dir.path(), "ia.csv", "t,A\n0.0,0.0\n0.1,0.0\n0.2,0.0\n");
        let tr = parse_contest_dataset(&vm, &va, &im, &ia, &ContestOptions::default()).unwrap();
        assert_eq!(tr.meta.gaps, vec![1]);
        assert!(tr.v[1].re.is_nan());
    }
}
