//! Gain sweep behind the shipped scenario files; results are summarized
//! in docs/calibration.md.
//!
//! Sweeps k_e and k_r on the three-vehicle chain scenario and prints, per
//! cell: settling time to 0.05 rad, the largest |x| or |y| reached, and
//! the final tracking error. Then checks the chosen gains under a lossy
//! link, with the consensus gain halved, and under the quadratic radius
//! convention at the linearization-equivalent gain.
//!
//! Run with: cargo run --release -p gvf-swarm-core --example calibrate

use gvf_swarm_core::formation::RadiusConvention;
use gvf_swarm_core::gvf::RotationSense;
use gvf_swarm_core::runner::{run, sync_time};
use gvf_swarm_core::scenario::{
    CircleSpec, GainSpec, LimitSpec, LinkSpec, ProtocolSpec, Scenario, VehicleSpec,
};

fn vehicle(id: u8, x: f64, y: f64, psi: f64, offset: u64) -> VehicleSpec {
    VehicleSpec {
        id,
        x_m: x,
        y_m: y,
        psi_rad: psi,
        speed_mps: 11.0,
        control_offset_ms: offset,
    }
}

fn chain_scenario(k_e: f64, k_r: f64) -> Scenario {
    Scenario {
        duration_s: 120.0,
        physics_dt_s: 0.02,
        seed: 7,
        convention: RadiusConvention::RadiusShift,
        rotation_sense: RotationSense::Clockwise,
        edges: vec![(1, 2), (2, 3)],
        circle: CircleSpec {
            center_x_m: 0.0,
            center_y_m: 0.0,
            radius_m: 30.0,
        },
        gains: GainSpec { k_e, k_d: 1.0, k_r },
        link: LinkSpec::default(),
        protocol: ProtocolSpec::default(),
        limits: LimitSpec::default(),
        vehicles: vec![
            vehicle(1, -120.0, 90.0, 0.0, 0),
            vehicle(2, 100.0, -110.0, 2.0, 160),
            vehicle(3, -40.0, -130.0, -1.2, 340),
        ],
        events: vec![],
    }
}

fn report(label: &str, scenario: &Scenario) {
    let out = run(scenario).expect("scenario is valid");
    let sync = sync_time(&out.log, 0.05)
        .map(|t| format!("{t:6.1} s"))
        .unwrap_or_else(|| "  never".into());
    let (lo, hi) = out.log.position_extent().expect("log is nonempty");
    let reach = lo.amax().max(hi.amax());
    let final_e = out
        .log
        .frames
        .last()
        .unwrap()
        .vehicles
        .iter()
        .map(|v| v.level_error.abs())
        .fold(0.0f64, f64::max);
    println!("{label}: sync {sync}  reach {reach:6.1} m  final max|e| {final_e:8.2} m^2");
}

fn main() {
    println!("== k_e x k_r sweep (chain of 3, radius_shift, perfect link) ==");
    for &k_e in &[5e-4, 1e-3, 2e-3, 4e-3, 8e-3] {
        for &k_r in &[2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 16.0] {
            report(
                &format!("k_e {k_e:6.0e}  k_r {k_r:4.1}"),
                &chain_scenario(k_e, k_r),
            );
        }
        println!();
    }

    let (k_e, k_r) = (2e-3, 10.0);
    println!("== chosen gains k_e {k_e:e}, k_r {k_r} under perturbations ==");

    let mut lossy = chain_scenario(k_e, k_r);
    lossy.link = LinkSpec {
        delay_ms: None,
        delay_min_ms: Some(0),
        delay_max_ms: Some(200),
        drop_probability: 0.2,
    };
    report("lossy link (drop 0.2, delay 0-200ms)", &lossy);

    report("half consensus gain", &chain_scenario(k_e, k_r / 2.0));

    let mut level = chain_scenario(k_e, 2.0 * 30.0 * k_r);
    level.convention = RadiusConvention::LevelShift;
    report("level_shift at 2*r*k_r", &level);

    report("baseline for comparison", &chain_scenario(k_e, k_r));
}
