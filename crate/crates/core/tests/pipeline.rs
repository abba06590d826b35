use dcad_core::model::Model;
use dcad_core::models;
use dcad_core::objectives::{EditDocument, EditSpec, ObjectiveConfig, ObjectiveId};
use dcad_core::optimize::Status;
use dcad_core::sync::{apply_option, synchronize, OptionGallery, SyncOptions};
use dcad_core::Error;

fn sync(
    m: &Model,
    p0: &[f64],
    edit: &EditSpec,
    config: &ObjectiveConfig,
) -> Result<OptionGallery, Error> {
    synchronize(
        m.tape.clone(),
        m.topology.clone(),
        &m.param_names,
        p0,
        edit,
        config,
        &SyncOptions::default(),
    )
}

#[test]
fn select_rewrite_recompile_round_trip() {
    let m = Model::compile(models::BOX).unwrap();
    let g = sync(
        &m,
        &m.initial_params,
        &EditSpec::new([(7, [1.5, 0.5, 0.5])], []),
        &ObjectiveConfig::default(),
    )
    .unwrap();
    let (params, positions) = apply_option(&g, 0).unwrap();

    let text = m.source_with_params(&params);
    assert!(text.contains("param w = 3"), "{text}");
    let m2 = Model::compile(&text).unwrap();
    for (a, b) in m2.initial_params.iter().zip(&params) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
    let pos2 = m2.positions(&m2.initial_params).unwrap();
    for (a, b) in pos2.iter().zip(&positions) {
        assert!((a - b).abs() < 1e-9);
    }

    // An identity edit from the selected state returns that state alone.
    let ident = EditSpec::new([(7, [positions[21], positions[22], positions[23]])], [0]);
    let g2 = sync(&m, &params, &ident, &ObjectiveConfig::default()).unwrap();
    assert_eq!(g2.options.len(), 1);
    assert_eq!(g2.options[0].params, params);
}

#[test]
fn gallery_invariants_on_dresser() {
    let m = Model::compile(models::DRESSER).unwrap();
    let rest = m.positions(&m.initial_params).unwrap();
    let edit = EditSpec::new(
        (36..40).map(|v| (v, [rest[3 * v], rest[3 * v + 1], rest[3 * v + 2] + 0.3])),
        [0, 1],
    );
    let config = ObjectiveConfig::default().with_objectives(&ObjectiveId::ALL);
    let g = sync(&m, &m.initial_params, &edit, &config).unwrap();

    assert_eq!(g.runs.len(), 8);
    assert!(g.runs.windows(2).all(|w| w[0].objective < w[1].objective));
    assert!(g.options.windows(2).all(|w| w[0].e_edit <= w[1].e_edit));
    for run in &g.runs {
        match run.option {
            Some(k) => {
                assert!(g.options[k].objectives.contains(&run.objective));
                assert_eq!(g.dedup_map[&run.objective], k);
                assert!(matches!(
                    run.status,
                    Status::Converged | Status::MaxIter | Status::Stalled
                ));
            }
            None => assert!(!g.dedup_map.contains_key(&run.objective)),
        }
    }
    for o in &g.options {
        assert_eq!(o.positions, m.positions(&o.params).unwrap());
        assert!(m
            .constraint_values(&o.params)
            .unwrap()
            .iter()
            .all(|&c| c >= -1e-6));
    }
    // Each option's representative is the first objective listed.
    for (k, o) in g.options.iter().enumerate() {
        let rep = g
            .runs
            .iter()
            .find(|r| r.objective == o.objectives[0])
            .unwrap();
        assert_eq!(rep.option, Some(k));
        assert_eq!(rep.params, o.params);
    }
}

#[test]
fn sync_is_deterministic() {
    let m = Model::compile(models::MOUNT).unwrap();
    let rest = m.positions(&m.initial_params).unwrap();
    let edit = EditSpec::new(
        [
            (2, [rest[6] + 0.3, rest[7], rest[8]]),
            (5, [rest[15], rest[16] + 0.2, rest[17]]),
        ],
        [0],
    );
    let a = sync(&m, &m.initial_params, &edit, &ObjectiveConfig::default()).unwrap();
    let b = sync(&m, &m.initial_params, &edit, &ObjectiveConfig::default()).unwrap();
    assert_eq!(a.options, b.options);
}

#[test]
fn bad_edits_are_rejected() {
    let m = Model::compile(models::BOX).unwrap();
    let err = sync(
        &m,
        &m.initial_params,
        &EditSpec::new([(99, [0.0; 3])], []),
        &ObjectiveConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Edit(_)), "{err}");
    let err = sync(
        &m,
        &m.initial_params,
        &EditSpec::new([], []),
        &ObjectiveConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Edit(_)), "{err}");
}

#[test]
fn edit_document_overrides_config() {
    let doc: EditDocument = serde_json::from_str(
        r#"{"moved": [{"vid": 7, "target": [1.5, 0.5, 0.5]}], "fixed": [0], "objectives": ["edit", "vol"], "gamma": {"vol": 0.5}}"#,
    )
    .unwrap();
    let config = doc.config(&ObjectiveConfig::default());
    assert_eq!(config.enabled, vec![ObjectiveId::Edit, ObjectiveId::Vol]);
    assert_eq!(config.gamma(ObjectiveId::Vol), 0.5);
    assert_eq!(doc.edit.fixed, vec![0]);
}
