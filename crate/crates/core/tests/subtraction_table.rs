use photostat::sensing::{subtraction_table, SensorConfig};

/// With the plasmonic share read straight off the transmissions, every
/// tabulated cell is reproduced within 10%.
#[test]
fn transmission_preset_reproduces_table() {
    let rows = subtraction_table(&SensorConfig::thesis_ch5_transmission()).unwrap();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert!(r.rel_err < 0.10, "n = {}, L = {}: {:.3e} vs {:.1e}", r.n_bar, r.l, r.probability, r.reference);
    }
}

#[test]
fn presets_resolve_by_name() {
    assert_eq!(SensorConfig::preset("thesis-ch5"), Some(SensorConfig::thesis_ch5()));
    assert_eq!(SensorConfig::preset("thesis-ch5-transmission"), Some(SensorConfig::thesis_ch5_transmission()));
    assert_eq!(SensorConfig::preset("other"), None);
}
