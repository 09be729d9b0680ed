//! Temporary diagnostics for the 129-node benchmark; removed once tuned.

use mfg_core::acceptance::reconstruction_benchmark_config;
use mfg_core::fields::ops;
use mfg_core::forward::RunningCost;
use mfg_core::inverse::{
    build_truth, extract_measurements, recover_cost_coefficient, run_pipeline, CoefficientSettings,
};

#[test]
fn dissect_quadratic_recovery() {
    let config = reconstruction_benchmark_config(129, 128, 0.0, false, 3);
    let out = run_pipeline(&config).unwrap();
    eprintln!(
        "pipeline: drift {:.3e} value {:.3e} kappa {:.3e} density {:.3e} coeffs {:?} gn_iters {}",
        out.errors.drift,
        out.errors.value,
        out.errors.conformal,
        out.errors.density,
        out.errors.coefficients,
        out.reconstruction.drift_iterations
    );
    for (order, rec) in &out.reconstruction.coefficients {
        eprintln!(
            "order {order}: lambda {:.1e} misfit {:.3e} target {:.3e} excitation {:.3e} rcond {:.2e}",
            rec.lambda, rec.misfit, rec.target, rec.excitation, rec.rcond
        );
        let truth_field = config.cost.coefficients[*order - 2]
            .profile
            .evaluate(&out.truth.grid)
            .unwrap();
        let grid = &out.truth.grid;
        let n = grid.n_nodes();
        for node in (0..n).step_by(8) {
            eprintln!(
                "  x={:.3} rec {:.4} truth {:.4}",
                grid.coords(node)[0],
                rec.coefficient.at(node),
                truth_field.at(node)
            );
        }
    }

    // Same solve with the exact state, metric, and lower coefficients: what
    // is left when no model error enters.
    let truth = build_truth(&config).unwrap();
    let extracted = extract_measurements(&config, &truth).unwrap();
    let lead = extracted
        .directions
        .iter()
        .position(|d| d.value_data.values().iter().all(|&v| v == 0.0))
        .unwrap();
    let empty = RunningCost::new(truth.state.density.clone(), vec![]).unwrap();
    let truth_f2 = config.cost.coefficients[0]
        .profile
        .evaluate(&truth.grid)
        .unwrap();
    for lambda in [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5] {
        let settings = CoefficientSettings {
            fallback_lambda: lambda,
            use_discrepancy: false,
            ..CoefficientSettings::default()
        };
        let rec2 = recover_cost_coefficient(
            &truth.state,
            &truth.metric,
            &empty,
            2,
            &extracted.directions[lead],
            &extracted.records[lead].second,
            &extracted.records[lead].second_noise,
            &settings,
        )
        .unwrap();
        let err2 = ops::relative_l2_error(&rec2.coefficient, &truth_f2);
        eprintln!(
            "truth-state order 2 at lambda {lambda:.0e}: err {:.3e} misfit {:.3e} rcond {:.2e}",
            err2, rec2.misfit, rec2.rcond
        );
    }
    let settings = CoefficientSettings {
        fallback_lambda: 1e-8,
        use_discrepancy: false,
        ..CoefficientSettings::default()
    };

    let truth_f3 = config.cost.coefficients[1]
        .profile
        .evaluate(&truth.grid)
        .unwrap();
    for lambda in [1e-10, 1e-9, 1e-8, 1e-7] {
        let sweep = CoefficientSettings {
            fallback_lambda: lambda,
            use_discrepancy: false,
            ..CoefficientSettings::default()
        };
        let with_f2 =
            RunningCost::new(truth.state.density.clone(), vec![(2, truth_f2.clone())]).unwrap();
        let rec3 = recover_cost_coefficient(
            &truth.state,
            &truth.metric,
            &with_f2,
            3,
            &extracted.directions[lead],
            extracted.records[lead].third.as_ref().unwrap(),
            &extracted.records[lead].third_noise,
            &sweep,
        )
        .unwrap();
        let err3 = ops::relative_l2_error(&rec3.coefficient, &truth_f3);
        eprintln!(
            "truth-state order 3 at lambda {lambda:.0e}: err {:.3e} misfit {:.3e} rcond {:.2e}",
            err3, rec3.misfit, rec3.rcond
        );
    }

    // Truth state but the *recovered* quadratic coefficient in the offset:
    // how much of the pipeline's cubic error is inherited from F2-hat.
    let rec_f2 = &out
        .reconstruction
        .coefficients
        .iter()
        .find(|(k, _)| *k == 2)
        .unwrap()
        .1
        .coefficient;
    let with_rec_f2 =
        RunningCost::new(truth.state.density.clone(), vec![(2, rec_f2.clone())]).unwrap();
    let rec3 = recover_cost_coefficient(
        &truth.state,
        &truth.metric,
        &with_rec_f2,
        3,
        &extracted.directions[lead],
        extracted.records[lead].third.as_ref().unwrap(),
        &extracted.records[lead].third_noise,
        &settings,
    )
    .unwrap();
    eprintln!(
        "truth-state + recovered-F2 order 3: err {:.3e}",
        ops::relative_l2_error(&rec3.coefficient, &truth_f3)
    );

    // Full sequential recovery against the *recovered* state at a ladder of
    // fallback weights: where the bias/model-error balance now sits.
    let recovered_state = mfg_core::forward::StationaryState {
        value: out.reconstruction.value.clone(),
        density: out.reconstruction.density.clone(),
        drift: out.reconstruction.drift.clone(),
    };
    let rmetric = &out.reconstruction.metric;
    for lambda in [1e-10, 3e-10, 1e-9, 3e-9, 1e-8] {
        let sweep = CoefficientSettings {
            fallback_lambda: lambda,
            use_discrepancy: false,
            ..CoefficientSettings::default()
        };
        let empty_r =
            RunningCost::new(recovered_state.density.clone(), vec![]).unwrap();
        let r2 = recover_cost_coefficient(
            &recovered_state,
            rmetric,
            &empty_r,
            2,
            &extracted.directions[lead],
            &extracted.records[lead].second,
            &extracted.records[lead].second_noise,
            &sweep,
        )
        .unwrap();
        let e2 = ops::relative_l2_error(&r2.coefficient, &truth_f2);
        let lower_r = RunningCost::new(
            recovered_state.density.clone(),
            vec![(2, r2.coefficient.clone())],
        )
        .unwrap();
        let r3 = recover_cost_coefficient(
            &recovered_state,
            rmetric,
            &lower_r,
            3,
            &extracted.directions[lead],
            extracted.records[lead].third.as_ref().unwrap(),
            &extracted.records[lead].third_noise,
            &sweep,
        )
        .unwrap();
        let e3 = ops::relative_l2_error(&r3.coefficient, &truth_f3);
        eprintln!("recovered-state sequential at lambda {lambda:.0e}: F2 {e2:.3e} F3 {e3:.3e}");
    }
}
