#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latent_audit/embedding_store.hpp"
#include "latent_audit/eval_stats.hpp"
#include "latent_audit/knn_ood.hpp"

namespace latent_audit {

/// Reference latents of one model (the set its detectors calibrate on).
struct ModelReference {
    std::string model_id;
    EmbeddingMatrix reference;
};

/// One dataset embedded by one model. `truth` and `predicted` are optional;
/// without both, the dataset only contributes outlier-table cells.
struct DatasetEmbeddings {
    std::string dataset;
    std::string model_id;
    EmbeddingMatrix embeddings;
    std::optional<LabelVector> truth;
    std::optional<LabelVector> predicted;
};

struct OutlierCell {
    std::string dataset;
    std::string model_id;
    std::size_t k = 0;
    std::size_t n = 0;
    std::size_t outliers = 0;
    double rate = 0.0;
};

struct ThresholdEntry {
    std::string model_id;
    std::size_t k = 0;
    std::size_t rank = 0;
    double threshold = 0.0;
};

struct ConditionalCell {
    std::size_t k = 0;
    ConditionalAccuracyRow row;
    double mean_class_accuracy = 0.0;
};

/// Pearson r across models between mean class accuracy and inlier fraction.
struct CorrelationCell {
    std::string dataset;
    std::size_t k = 0;
    CorrelationResult result;
};

struct AccuracySummaryCell {
    std::string dataset;
    std::size_t models = 0;
    SummaryStats mean_class_accuracy;
};

struct EvalReport {
    double alpha = 0.0;
    std::vector<std::size_t> ks;
    std::vector<std::string> datasets;  // first-appearance order
    std::vector<std::string> models;    // reference order
    std::vector<ThresholdEntry> thresholds;
    std::vector<OutlierCell> outliers;
    std::vector<ConditionalCell> conditional;
    std::vector<AccuracySummaryCell> accuracy_summary;
    std::vector<CorrelationCell> correlations;
    std::vector<std::string> warnings;
};

/// Calibrates each model's reference for every k (at `alpha`) and scores each
/// dataset against its model. Every dataset must be present for every model.
/// Cells are ordered dataset, then model, then k.
EvalReport evaluate(std::span<const ModelReference> models, std::span<const DatasetEmbeddings> datasets,
                    std::span<const std::size_t> ks, double alpha);

/// Just the outlier-percentage cells of `evaluate`.
std::vector<OutlierCell> outlier_table(std::span<const ModelReference> models,
                                       std::span<const DatasetEmbeddings> datasets,
                                       std::span<const std::size_t> ks, double alpha);

enum class ReportFormat { Text, Csv, Json };

ReportFormat parse_report_format(const std::string& name);

std::string render_text(const EvalReport& report);
/// Long format: `table,dataset,model_id,k,field,value`, one line per cell
/// field. Numbers use shortest round-trip formatting; NaN renders as n/a.
std::string render_csv(const EvalReport& report);
/// Nested dataset -> model -> k; NaN renders as the string "n/a".
std::string render_json(const EvalReport& report);
std::string render(const EvalReport& report, ReportFormat format);

/// Shortest decimal that round-trips the double.
std::string format_number(double value);

}  // namespace latent_audit
