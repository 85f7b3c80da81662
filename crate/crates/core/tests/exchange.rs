use csifb::channel::{generate_dataset, ChannelRealization, ScenarioConfig};
use csifb::codec::{write_model, EncoderFamily, EncoderModel, ModelFile, QuantCodebook};
use csifb::interop::{
    audit_handover_dir, export_exchange_dataset, read_exchange, vendor_boundary_audit, write_exchange,
    BoundaryLog, EncoderId, Party,
};

fn channels(n: usize) -> Vec<ChannelRealization> {
    generate_dataset(&ScenarioConfig::preset("nlos", 3).unwrap(), n).unwrap().collect()
}

#[test]
fn exchange_file_round_trip() {
    let cb = QuantCodebook::default();
    let enc = EncoderModel::init(EncoderFamily::SharedB, 11, 1).unwrap();
    let ds = export_exchange_dataset(&enc, &cb, &channels(6), 3).unwrap();
    assert_eq!(ds.records.len(), 6 * 3 * 5);
    ds.validate().unwrap();
    let mut buf = Vec::new();
    write_exchange(&mut buf, &ds).unwrap();
    assert_eq!(&buf[..4], b"CSIX");
    assert_eq!(read_exchange(&buf[..]).unwrap(), ds);
    for cut in [3, 10, buf.len() / 2, buf.len() - 1] {
        assert!(read_exchange(&buf[..cut]).is_err());
    }
}

#[test]
fn handover_dir_rejects_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let cb = QuantCodebook::default();
    let enc = EncoderModel::init(EncoderFamily::DenseA, 4, 1).unwrap();
    let ds = export_exchange_dataset(&enc, &cb, &channels(2), 1).unwrap();
    write_exchange(std::fs::File::create(dir.path().join("ue4.csix")).unwrap(), &ds).unwrap();
    let clean = audit_handover_dir(dir.path()).unwrap();
    assert!(clean.passed, "{:?}", clean.violations);

    write_model(std::fs::File::create(dir.path().join("sneaky.bin")).unwrap(), &ModelFile::Encoder(enc)).unwrap();
    let dirty = audit_handover_dir(dir.path()).unwrap();
    assert!(!dirty.passed);
    assert!(dirty.violations.iter().any(|v| v.contains("sneaky.bin")));

    std::fs::remove_file(dir.path().join("sneaky.bin")).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "hello").unwrap();
    assert!(!audit_handover_dir(dir.path()).unwrap().passed);
}

#[test]
fn boundary_log_flags_weight_transfers() {
    let mut log = BoundaryLog::new();
    log.transfer(Party::Ue(4), Party::Gnb, EncoderId(4));
    log.transfer(Party::Gnb, Party::Ue(4), QuantCodebook::default());
    log.transfer(Party::Gnb, Party::Gnb, EncoderId(7));
    let report = vendor_boundary_audit(&log);
    assert!(report.passed);
    assert_eq!(report.crossings.len(), 2);

    log.record_weight_transfer(Party::Gnb, Party::Ue(11), "decoder weights");
    let report = vendor_boundary_audit(&log);
    assert!(!report.passed);
    assert_eq!(report.violations.len(), 1);
}
