#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spectrum) = zps_core::io::read_spectrum(data, 3e3) {
        // Anything accepted must interpolate at its own grid points.
        for &f in spectrum.offsets_hz() {
            spectrum.power_at(f).unwrap();
        }
    }
});
