#include "latent_audit/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"

#include "latent_audit/error.hpp"

namespace latent_audit {

namespace {

const DatasetEmbeddings* find_dataset(std::span<const DatasetEmbeddings> datasets, const std::string& name,
                                      const std::string& model) {
    for (const auto& d : datasets) {
        if (d.dataset == name && d.model_id == model) {
            return &d;
        }
    }
    return nullptr;
}

std::string percent(double rate) {
    if (std::isnan(rate)) {
        return "n/a";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * rate);
    return buf;
}

std::string fixed(double v, int digits) {
    if (std::isnan(v)) {
        return "n/a";
    }
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

class TextTable {
public:
    explicit TextTable(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    std::string str() const {
        std::vector<std::size_t> width(rows_.front().size(), 0);
        for (const auto& r : rows_) {
            for (std::size_t c = 0; c < r.size(); ++c) {
                width[c] = std::max(width[c], r[c].size());
            }
        }
        std::ostringstream out;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            for (std::size_t c = 0; c < rows_[i].size(); ++c) {
                const auto& cell = rows_[i][c];
                if (c == 0) {
                    out << cell << std::string(width[c] - cell.size(), ' ');
                } else {
                    out << "  " << std::string(width[c] - cell.size(), ' ') << cell;
                }
            }
            out << '\n';
            if (i == 0) {
                std::size_t total = 0;
                for (std::size_t w : width) total += w + 2;
                out << std::string(total - 2, '-') << '\n';
            }
        }
        return out.str();
    }

private:
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace

std::string format_number(double value) {
    if (std::isnan(value)) {
        return "n/a";
    }
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

EvalReport evaluate(std::span<const ModelReference> models, std::span<const DatasetEmbeddings> datasets,
                    std::span<const std::size_t> ks, double alpha) {
    if (models.empty()) {
        throw Error(ErrorKind::EmptyInput, "no model references");
    }
    EvalReport report;
    report.alpha = alpha;
    report.ks.assign(ks.begin(), ks.end());
    for (const auto& m : models) {
        if (std::find(report.models.begin(), report.models.end(), m.model_id) != report.models.end()) {
            throw Error(ErrorKind::InvalidArgument, "duplicate model id '" + m.model_id + "'");
        }
        report.models.push_back(m.model_id);
    }
    for (const auto& d : datasets) {
        if (std::find(report.models.begin(), report.models.end(), d.model_id) == report.models.end()) {
            throw Error(ErrorKind::InvalidArgument,
                        "dataset '" + d.dataset + "' references unknown model '" + d.model_id + "'");
        }
        if (std::find(report.datasets.begin(), report.datasets.end(), d.dataset) == report.datasets.end()) {
            report.datasets.push_back(d.dataset);
        }
    }
    for (const auto& name : report.datasets) {
        for (const auto& model : report.models) {
            if (!find_dataset(datasets, name, model)) {
                throw Error(ErrorKind::InvalidArgument,
                            "dataset '" + name + "' has no embeddings for model '" + model + "'");
            }
        }
    }

    // verdicts[dataset][model][k index]
    std::map<std::string, std::map<std::string, std::vector<std::vector<Verdict>>>> verdicts;
    for (const auto& m : models) {
        const auto detectors = calibrate_many(m.reference, ks, alpha);
        for (const auto& det : detectors) {
            report.thresholds.push_back({m.model_id, det.k(), det.rank(), det.threshold()});
        }
        for (const auto& name : report.datasets) {
            verdicts[name][m.model_id] = score_many(detectors, find_dataset(datasets, name, m.model_id)->embeddings);
        }
    }

    for (const auto& name : report.datasets) {
        for (const auto& model : report.models) {
            const auto& per_k = verdicts[name][model];
            const auto* ds = find_dataset(datasets, name, model);
            for (std::size_t j = 0; j < ks.size(); ++j) {
                OutlierCell cell{name, model, ks[j], per_k[j].size(), 0, std::nan("")};
                cell.outliers = static_cast<std::size_t>(std::count_if(
                    per_k[j].begin(), per_k[j].end(), [](const Verdict& v) { return v.is_outlier; }));
                if (cell.n > 0) {
                    cell.rate = outlier_rate(per_k[j]);
                } else {
                    report.warnings.push_back("dataset '" + name + "' is empty for model '" + model + "'");
                }
                report.outliers.push_back(std::move(cell));
            }
            if (!ds->truth || !ds->predicted) {
                if (ds->truth || ds->predicted) {
                    report.warnings.push_back("dataset '" + name + "' model '" + model +
                                              "': labels and predictions both needed for accuracy; rendered n/a");
                }
                continue;
            }
            double mca = std::nan("");
            try {
                mca = mean_class_accuracy(*ds->truth, *ds->predicted);
            } catch (const Error& e) {
                report.warnings.push_back("dataset '" + name + "' model '" + model + "': " + e.what());
            }
            for (std::size_t j = 0; j < ks.size(); ++j) {
                report.conditional.push_back(
                    {ks[j], conditional_accuracy_table(*ds->truth, *ds->predicted, per_k[j], name, model), mca});
            }
        }
    }

    for (const auto& name : report.datasets) {
        std::vector<double> accuracies;
        for (const auto& c : report.conditional) {
            if (c.row.dataset == name && c.k == ks.front() && !std::isnan(c.mean_class_accuracy)) {
                accuracies.push_back(c.mean_class_accuracy);
            }
        }
        if (!accuracies.empty()) {
            report.accuracy_summary.push_back({name, accuracies.size(), summary_stats(accuracies)});
        }
        for (std::size_t j = 0; j < ks.size(); ++j) {
            std::vector<double> acc, inlier;
            for (const auto& c : report.conditional) {
                if (c.row.dataset == name && c.k == ks[j] && !std::isnan(c.mean_class_accuracy) && c.row.total > 0) {
                    acc.push_back(c.mean_class_accuracy);
                    inlier.push_back(static_cast<double>(c.row.inlier_total) / static_cast<double>(c.row.total));
                }
            }
            if (acc.empty()) {
                continue;
            }
            if (acc.size() < 3) {
                report.warnings.push_back("dataset '" + name + "' k=" + std::to_string(ks[j]) +
                                          ": correlation needs >= 3 models with accuracy");
                continue;
            }
            try {
                report.correlations.push_back({name, ks[j], correlate(acc, inlier)});
            } catch (const Error& e) {
                report.warnings.push_back("dataset '" + name + "' k=" + std::to_string(ks[j]) + ": " + e.what());
            }
        }
    }
    return report;
}

std::vector<OutlierCell> outlier_table(std::span<const ModelReference> models,
                                       std::span<const DatasetEmbeddings> datasets,
                                       std::span<const std::size_t> ks, double alpha) {
    std::vector<DatasetEmbeddings> stripped;
    stripped.reserve(datasets.size());
    for (const auto& d : datasets) {
        stripped.push_back({d.dataset, d.model_id, d.embeddings, std::nullopt, std::nullopt});
    }
    return evaluate(models, stripped, ks, alpha).outliers;
}

ReportFormat parse_report_format(const std::string& name) {
    if (name == "text") return ReportFormat::Text;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw Error(ErrorKind::InvalidArgument, "unknown format '" + name + "' (text|csv|json)");
}

std::string render_text(const EvalReport& report) {
    std::ostringstream out;
    out << "Deep kNN outlier percentages (alpha = " << format_number(report.alpha) << ")\n";
    {
        std::vector<std::string> header{"dataset", "n", "model"};
        for (std::size_t k : report.ks) header.push_back("k=" + std::to_string(k));
        TextTable table(header);
        for (const auto& name : report.datasets) {
            for (const auto& model : report.models) {
                std::vector<std::string> row{name, "", model};
                for (const auto& c : report.outliers) {
                    if (c.dataset == name && c.model_id == model) {
                        row[1] = std::to_string(c.n);
                        row.push_back(percent(c.rate));
                    }
                }
                table.add(std::move(row));
            }
        }
        out << table.str();
    }
    out << "\nThresholds\n";
    {
        TextTable table({"model", "k", "K", "T"});
        for (const auto& t : report.thresholds) {
            table.add({t.model_id, std::to_string(t.k), std::to_string(t.rank), fixed(t.threshold, 6)});
        }
        out << table.str();
    }
    if (!report.conditional.empty()) {
        out << "\nAccuracy by kNN verdict (overall accuracy; mean class accuracy in last column)\n";
        TextTable table({"dataset", "model", "k", "correct", "inliers", "inlier acc", "outliers",
                         "outlier acc", "mean class acc"});
        for (const auto& c : report.conditional) {
            const auto& r = c.row;
            table.add({r.dataset, r.model_id, std::to_string(c.k),
                       std::to_string(r.total_correct) + " (" + percent(r.accuracy()) + ")",
                       std::to_string(r.inlier_total), percent(r.inlier_accuracy()),
                       std::to_string(r.outlier_total), percent(r.outlier_accuracy()),
                       fixed(c.mean_class_accuracy, 3)});
        }
        out << table.str();
    }
    if (!report.accuracy_summary.empty()) {
        out << "\nMean class accuracy across models\n";
        TextTable table({"dataset", "models", "min", "mean", "max"});
        for (const auto& s : report.accuracy_summary) {
            table.add({s.dataset, std::to_string(s.models), fixed(s.mean_class_accuracy.min, 3),
                       fixed(s.mean_class_accuracy.mean, 3), fixed(s.mean_class_accuracy.max, 3)});
        }
        out << table.str();
    }
    if (!report.correlations.empty()) {
        out << "\nPearson r between mean class accuracy and inlier fraction\n";
        TextTable table({"dataset", "k", "n", "r", "2-sided p"});
        for (const auto& c : report.correlations) {
            table.add({c.dataset, std::to_string(c.k), std::to_string(c.result.n), fixed(c.result.r, 2),
                       fixed(c.result.p_two_sided, 2)});
        }
        out << table.str();
    }
    for (const auto& w : report.warnings) {
        out << "warning: " << w << '\n';
    }
    return out.str();
}

std::string render_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "table,dataset,model_id,k,field,value\n";
    auto line = [&](const char* table, const std::string& ds, const std::string& model, std::size_t k,
                    const char* field, double value) {
        out << table << ',' << ds << ',' << model << ',' << k << ',' << field << ',' << format_number(value)
            << '\n';
    };
    auto count = [](std::size_t v) { return static_cast<double>(v); };
    for (const auto& t : report.thresholds) {
        line("thresholds", "", t.model_id, t.k, "rank", count(t.rank));
        line("thresholds", "", t.model_id, t.k, "threshold", t.threshold);
    }
    for (const auto& c : report.outliers) {
        line("outliers", c.dataset, c.model_id, c.k, "n", count(c.n));
        line("outliers", c.dataset, c.model_id, c.k, "outliers", count(c.outliers));
        line("outliers", c.dataset, c.model_id, c.k, "outlier_rate", c.rate);
    }
    for (const auto& c : report.conditional) {
        const auto& r = c.row;
        line("conditional", r.dataset, r.model_id, c.k, "total", count(r.total));
        line("conditional", r.dataset, r.model_id, c.k, "total_correct", count(r.total_correct));
        line("conditional", r.dataset, r.model_id, c.k, "inlier_total", count(r.inlier_total));
        line("conditional", r.dataset, r.model_id, c.k, "inlier_correct", count(r.inlier_correct));
        line("conditional", r.dataset, r.model_id, c.k, "outlier_total", count(r.outlier_total));
        line("conditional", r.dataset, r.model_id, c.k, "outlier_correct", count(r.outlier_correct));
        line("conditional", r.dataset, r.model_id, c.k, "accuracy", r.accuracy());
        line("conditional", r.dataset, r.model_id, c.k, "inlier_accuracy", r.inlier_accuracy());
        line("conditional", r.dataset, r.model_id, c.k, "outlier_accuracy", r.outlier_accuracy());
        line("conditional", r.dataset, r.model_id, c.k, "mean_class_accuracy", c.mean_class_accuracy);
    }
    for (const auto& s : report.accuracy_summary) {
        line("accuracy_summary", s.dataset, "*", 0, "models", count(s.models));
        line("accuracy_summary", s.dataset, "*", 0, "min", s.mean_class_accuracy.min);
        line("accuracy_summary", s.dataset, "*", 0, "mean", s.mean_class_accuracy.mean);
        line("accuracy_summary", s.dataset, "*", 0, "max", s.mean_class_accuracy.max);
    }
    for (const auto& c : report.correlations) {
        line("correlation", c.dataset, "*", c.k, "n", count(c.result.n));
        line("correlation", c.dataset, "*", c.k, "r", c.result.r);
        line("correlation", c.dataset, "*", c.k, "p_two_sided", c.result.p_two_sided);
    }
    return out.str();
}

std::string render_json(const EvalReport& report) {
    using json = nlohmann::ordered_json;
    auto num = [](double v) { return std::isnan(v) ? json("n/a") : json(v); };
    json j;
    j["alpha"] = report.alpha;
    j["k_values"] = report.ks;
    json thresholds = json::object();
    for (const auto& t : report.thresholds) {
        thresholds[t.model_id][std::to_string(t.k)] = {{"rank", t.rank}, {"threshold", t.threshold}};
    }
    j["thresholds"] = thresholds;
    json outliers = json::object();
    for (const auto& c : report.outliers) {
        outliers[c.dataset][c.model_id][std::to_string(c.k)] = {
            {"n", c.n}, {"outliers", c.outliers}, {"outlier_rate", num(c.rate)}};
    }
    j["outliers"] = outliers;
    json conditional = json::object();
    for (const auto& c : report.conditional) {
        const auto& r = c.row;
        conditional[r.dataset][r.model_id][std::to_string(c.k)] = {
            {"total", r.total},
            {"total_correct", r.total_correct},
            {"inlier_total", r.inlier_total},
            {"inlier_correct", r.inlier_correct},
            {"outlier_total", r.outlier_total},
            {"outlier_correct", r.outlier_correct},
            {"accuracy", num(r.accuracy())},
            {"inlier_accuracy", num(r.inlier_accuracy())},
            {"outlier_accuracy", num(r.outlier_accuracy())},
            {"mean_class_accuracy", num(c.mean_class_accuracy)}};
    }
    j["conditional"] = conditional;
    json summary = json::object();
    for (const auto& s : report.accuracy_summary) {
        summary[s.dataset] = {{"models", s.models},
                              {"min", s.mean_class_accuracy.min},
                              {"mean", s.mean_class_accuracy.mean},
                              {"max", s.mean_class_accuracy.max}};
    }
    j["accuracy_summary"] = summary;
    json corr = json::object();
    for (const auto& c : report.correlations) {
        corr[c.dataset][std::to_string(c.k)] = {
            {"n", c.result.n}, {"r", c.result.r}, {"p_two_sided", c.result.p_two_sided}};
    }
    j["correlation"] = corr;
    j["warnings"] = report.warnings;
    return j.dump(2) + "\n";
}

std::string render(const EvalReport& report, ReportFormat format) {
    switch (format) {
        case ReportFormat::Text: return render_text(report);
        case ReportFormat::Csv: return render_csv(report);
        case ReportFormat::Json: return render_json(report);
    }
    return {};
}

}  // namespace latent_audit
