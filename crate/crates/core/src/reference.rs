//! Published per-benchmark reference figures, shown beside measured values
//! in reports.

use serde::Serialize;

use crate::types::Benchmark;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub benchmark: Benchmark,
    /// Share of continuations recovered verbatim, in percent.
    pub exact_pct: f64,
    /// Fuzzy continuation score, in percent.
    pub fuzzy: MeanStd,
    /// Best accuracy across models with DWM and with CoT.
    pub dwm_accuracy: f64,
    pub cot_accuracy: f64,
    pub statefulness: MeanStd,
    pub statelessness: MeanStd,
    /// DWM split count with the highest accuracy.
    pub best_split: usize,
}

const fn ms(mean: f64, std: f64) -> MeanStd {
    MeanStd { mean, std }
}

pub const REFERENCE: [ReferenceRow; 5] = [
    ReferenceRow {
        benchmark: Benchmark::ToMi,
        exact_pct: 52.0,
        fuzzy: ms(89.0, 15.0),
        dwm_accuracy: 0.625,
        cot_accuracy: 0.629,
        statefulness: ms(2.62, 1.68),
        statelessness: ms(4.27, 2.1),
        best_split: 3,
    },
    ReferenceRow {
        benchmark: Benchmark::FANToM,
        exact_pct: 35.0,
        fuzzy: ms(74.0, 24.0),
        dwm_accuracy: 0.579,
        cot_accuracy: 0.403,
        statefulness: ms(2.44, 0.96),
        statelessness: ms(59.42, 18.91),
        best_split: 3,
    },
    ReferenceRow {
        benchmark: Benchmark::MindGames,
        exact_pct: 2.0,
        fuzzy: ms(64.0, 18.0),
        dwm_accuracy: 0.618,
        cot_accuracy: 0.552,
        statefulness: ms(1.22, 0.90),
        statelessness: ms(5.24, 2.71),
        best_split: 1,
    },
    ReferenceRow {
        benchmark: Benchmark::AdvCSFB,
        exact_pct: 0.0,
        fuzzy: ms(51.0, 11.0),
        dwm_accuracy: 0.8364,
        cot_accuracy: 0.7091,
        statefulness: ms(3.24, 1.35),
        statelessness: ms(2.86, 1.34),
        best_split: 4,
    },
    ReferenceRow {
        benchmark: Benchmark::SocialIQa,
        exact_pct: 0.0,
        fuzzy: ms(40.0, 12.0),
        dwm_accuracy: 0.691,
        cot_accuracy: 0.736,
        statefulness: ms(1.0, 0.0),
        statelessness: ms(1.14, 0.447),
        best_split: 1,
    },
];

pub fn reference(benchmark: Benchmark) -> Option<&'static ReferenceRow> {
    REFERENCE.iter().find(|r| r.benchmark == benchmark)
}
