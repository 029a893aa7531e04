use osloc_core::pipeline::*;
use osloc_core::pmuio::{add_noise, NoiseSpec};
use osloc_core::simulate::*;
use osloc_core::*;

fn main() {
    let spec = default_bench_spec();
    let bench = TestBench::build(&spec).unwrap();
    let h_idx = bench.unit_index("H").unwrap();
    let cases: Vec<(&str, Option<FoInjection>)> = vec![
        ("A1", Some(FoInjection::EfdModulation {
            unit: "H".into(),
            params: EfdModulation::a1(bench.init_info[h_idx].e_fd0),
        })),
        ("A2", Some(FoInjection::GateSquare {
            unit: "H".into(),
            params: GateSquare::a2(bench.init_info[h_idx].gate0),
        })),
        ("quiet", None),
    ];
    for rw in [10.0_f64, 30.0] {
        println!("===== rw = {rw}");
        for (name, inj) in &cases {
            let dur = if inj.is_some() { 102.0 } else { 40.0 };
            let (_, trace) = run_scenario(&bench, inj.as_ref(), dur).unwrap();
            for (tve, fe, seed) in [(0.0, 0.0, 0u64), (0.01, 5e-4, 7), (0.01, 5e-4, 21)] {
                let noisy = add_noise(&trace, &NoiseSpec { tve, fe_hz: fe, seed });
                let mut opts = LocateOptions::default();
                opts.dse.input_rw_per_s = [rw, rw];
                match locate(&bench, &noisy, &opts) {
                    Ok((report, _)) => {
                        let r = report.ranking.as_ref().unwrap();
                        let f: Vec<String> = r.unit_ids.iter().zip(&r.final_energies)
                            .map(|(id, e)| format!("{id}:{e:.2e}")).collect();
                        println!(
                            "{name:5} tve={tve:4.2} seed={seed:2}: fo={:5} onset={:>6} -> {} m={:5.2} | {} | {:?}",
                            report.fo_detected,
                            report.onset.map(|o| format!("{:.2}", o.time_s)).unwrap_or("-".into()),
                            r.identified, r.margin, f.join(" "),
                            report.verdict.as_ref().map(|v| v.source),
                        );
                    }
                    Err(e) => println!("{name:5} tve={tve:4.2} seed={seed:2}: FAILED {e}"),
                }
            }
        }
    }
}
