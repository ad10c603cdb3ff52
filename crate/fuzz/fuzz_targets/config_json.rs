#![no_main]
use libfuzzer_sys::fuzz_target;
use zps_core::config::RunConfigFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = RunConfigFile::from_json(text) {
        let _ = file.resolve();
    }
});
