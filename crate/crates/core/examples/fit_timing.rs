//! Wall-clock cost of one posterior fit per model on a six-indication dataset.

use std::time::Instant;

use basket_core::divergence::IndicationData;
use basket_core::inference::{fit, McmcConfig, ModelSpec, Rates};
use basket_core::stats::RngStream;

fn main() {
    let data: Vec<IndicationData> = [(24, 5), (24, 4), (24, 10), (24, 6), (24, 5), (24, 3)]
        .iter()
        .map(|&(n, r)| IndicationData::new(n, r).unwrap())
        .collect();
    let rates = Rates::common(0.2, 0.4, data.len());
    let cfg = McmcConfig::default();
    for name in ["independent", "bhm", "exnex", "liu", "cbhm", "cbhm_h", "cbhm_kl"] {
        let spec = ModelSpec::from_name(name).unwrap();
        let mut rng = RngStream::new(1, 0);
        let reps = 5;
        let t = Instant::now();
        let mut post = None;
        for _ in 0..reps {
            post = Some(fit(&spec, &data, &rates, &cfg, &mut rng).unwrap());
        }
        let post = post.unwrap();
        let ms = t.elapsed().as_secs_f64() * 1e3 / reps as f64;
        let means: Vec<String> = (0..6).map(|i| format!("{:.3}", post.mean(i))).collect();
        let acc = post
            .samples()
            .map(|s| format!("{:?}", s.diagnostics.acceptance.iter().map(|(n, a)| format!("{n}={a:.2}")).collect::<Vec<_>>()))
            .unwrap_or_default();
        println!("{name:12} {ms:8.2} ms  means [{}]  {acc}", means.join(", "));
    }
}
