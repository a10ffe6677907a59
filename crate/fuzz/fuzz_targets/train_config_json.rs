#![no_main]

use libfuzzer_sys::fuzz_target;
use roadcast::train::TrainConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(config) = serde_json::from_slice::<TrainConfig>(data) {
        if config.validate().is_ok() {
            let _ = config.model_config().validate();
        }
    }
});
