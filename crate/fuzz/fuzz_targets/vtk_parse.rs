#![no_main]
use libfuzzer_sys::fuzz_target;
use obstacle_dg::vtk::VtkGrid;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(grid) = VtkGrid::parse(text) {
        let again = VtkGrid::parse(&grid.to_vtk("fuzz")).expect("round trip of a parsed grid");
        assert_eq!(again.cells, grid.cells);
    }
});
