#![no_main]
use acfe::checkpoint::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(cp) = Checkpoint::parse(data) else { return };
    if cp.nx.saturating_mul(cp.ny) > 64 || cp.leaves.iter().map(|(_, p)| p.len()).sum::<usize>() > 4096 {
        return;
    }
    if let Ok(base) = cp.base_mesh() {
        let _ = cp.to_state(&base);
    }
});
