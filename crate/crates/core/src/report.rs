//! CSV reporting of traffic and quality measurements.

use std::path::Path;

use crate::compositor::{CommStats, ExchangeCost, SegmentCensus, SortLastStats};
use crate::error::Result;
use crate::metrics::QualityReport;

pub const REPORT_HEADER: &str = "scene,ranks,camera,algorithm,stage,bytes,messages,avg_segments_per_nonempty_pixel,ssim,mse,psnr,max_abs_diff";

/// One measurement. Traffic rows leave the quality columns empty and vice
/// versa, so the file stays trivially greppable per stage.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub scene: String,
    pub ranks: usize,
    pub camera: usize,
    pub algorithm: String,
    pub stage: String,
    pub bytes: Option<u64>,
    pub messages: Option<u64>,
    pub avg_segments: Option<f64>,
    pub quality: Option<QualityReport>,
}

impl ReportRow {
    fn new(scene: &str, ranks: usize, camera: usize, algorithm: &str, stage: &str) -> Self {
        ReportRow {
            scene: scene.to_string(),
            ranks,
            camera,
            algorithm: algorithm.to_string(),
            stage: stage.to_string(),
            bytes: None,
            messages: None,
            avg_segments: None,
            quality: None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut fields = vec![
            self.scene.clone(),
            self.ranks.to_string(),
            self.camera.to_string(),
            self.algorithm.clone(),
            self.stage.clone(),
            self.bytes.map(|b| b.to_string()).unwrap_or_default(),
            self.messages.map(|m| m.to_string()).unwrap_or_default(),
            self.avg_segments.map(format_float).unwrap_or_default(),
        ];
        match &self.quality {
            Some(q) => {
                fields.push(format_float(q.ssim));
                fields.push(format_float(q.mse));
                fields.push(format_float(q.psnr));
                fields.push(format_float(q.max_abs_diff));
            }
            None => fields.extend(std::iter::repeat_with(String::new).take(4)),
        }
        fields.join(",")
    }
}

fn format_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v}")
    }
}

/// Accumulates rows and renders the final file.
#[derive(Clone, Debug, Default)]
pub struct Report {
    rows: Vec<ReportRow>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ReportRow>) {
        self.rows.extend(rows);
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Traffic rows for the two-reduction pipeline, one per exchange flavor
/// plus a total.
pub fn apc_traffic_rows(scene: &str, camera: usize, stats: &CommStats) -> Vec<ReportRow> {
    let n = stats.ranks as u64;
    let stage = |name: &str, bytes: u64, messages: u64| {
        let mut row = ReportRow::new(scene, stats.ranks, camera, "apc", name);
        row.bytes = Some(bytes);
        row.messages = Some(messages);
        row
    };
    let mut rows = vec![
        stage("moments_allreduce", stats.bytes_moment_exchange, n),
        stage("moments_allreduce_compact", stats.bytes_moment_exchange_compact, n),
        stage("moments_allreduce_tiled", stats.bytes_moment_exchange_nonempty, n),
        stage(
            "moments_allreduce_tiled_compact",
            stats.bytes_moment_exchange_nonempty_compact,
            n,
        ),
        stage("color_reduce", stats.bytes_color_exchange, n),
        stage("color_reduce_tiled", stats.bytes_color_exchange_nonempty, n),
    ];
    let mut total = stage(
        "total",
        stats.bytes_total(),
        n * stats.reduction_rounds as u64,
    );
    total.avg_segments = Some(stats.equivalent_segments_avg);
    rows.push(total);
    rows
}

/// Traffic rows for a sort-last gather.
pub fn sort_last_traffic_rows(
    scene: &str,
    camera: usize,
    stats: &SortLastStats,
    census: &SegmentCensus,
) -> Vec<ReportRow> {
    let mut full = ReportRow::new(scene, stats.ranks, camera, "sort_last", "segment_gather");
    full.bytes = Some(stats.bytes_segment_exchange);
    full.messages = Some(stats.ranks as u64);
    full.avg_segments = Some(average_segments_per_nonempty_pixel(census));
    let mut compact = ReportRow::new(
        scene,
        stats.ranks,
        camera,
        "sort_last",
        "segment_gather_color_only",
    );
    compact.bytes = Some(stats.bytes_segment_exchange_color_only);
    compact.messages = Some(stats.ranks as u64);
    vec![full, compact]
}

/// Traffic row for a priced exchange pattern.
pub fn exchange_cost_row(
    scene: &str,
    ranks: usize,
    camera: usize,
    algorithm: &str,
    cost: &ExchangeCost,
) -> ReportRow {
    let mut row = ReportRow::new(scene, ranks, camera, algorithm, "exchange");
    row.bytes = Some(cost.bytes);
    row.messages = Some(cost.messages);
    row
}

/// Quality row comparing an algorithm's frame against a named reference.
pub fn quality_row(
    scene: &str,
    ranks: usize,
    camera: usize,
    algorithm: &str,
    reference: &str,
    quality: QualityReport,
) -> ReportRow {
    let mut row = ReportRow::new(scene, ranks, camera, algorithm, &format!("quality_vs_{reference}"));
    row.quality = Some(quality);
    row
}

/// Mean segments a covered pixel carries across all ranks.
pub fn average_segments_per_nonempty_pixel(census: &SegmentCensus) -> f64 {
    let (width, height) = census.dimensions();
    let mut covered = 0u64;
    let mut segments = 0u64;
    for y in 0..height {
        for x in 0..width {
            let total = census.pixel_total(x, y);
            if total > 0 {
                covered += 1;
                segments += total;
            }
        }
    }
    if covered == 0 {
        0.0
    } else {
        segments as f64 / covered as f64
    }
}
