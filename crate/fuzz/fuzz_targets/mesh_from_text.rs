#![no_main]
use libfuzzer_sys::fuzz_target;
use obstacle_dg::mesh::Mesh;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mesh) = Mesh::from_text(text) {
        let again = Mesh::from_text(&mesh.to_text()).expect("round trip of a valid mesh");
        assert_eq!(again.num_elements(), mesh.num_elements());
    }
});
