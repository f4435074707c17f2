#include "latent_audit/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "latent_audit/embedding_store.hpp"
#include "latent_audit/error.hpp"
#include "latent_audit/eval_stats.hpp"
#include "latent_audit/knn_ood.hpp"
#include "latent_audit/report.hpp"
#include "latent_audit/rng.hpp"
#include "latent_audit/synth_data.hpp"
#include "latent_audit/toy_encoder.hpp"

namespace latent_audit {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string format = "text";
    std::string config;
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        std::istringstream is(item);
        T value{};
        is >> value;
        if (!is || !is.eof()) {
            throw Error(ErrorKind::InvalidArgument, std::string(flag) + ": cannot parse '" + item + "'");
        }
        out.push_back(value);
    }
    if (out.empty()) {
        throw Error(ErrorKind::InvalidArgument, std::string(flag) + " is empty");
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool is_manifest(const fs::path& p) { return p.extension() == ".json"; }

EmbeddingMatrix load_matrix(const fs::path& p) {
    return is_manifest(p) ? load_dataset(p).embeddings : read_embeddings(p);
}

/// Strips `.detector.json` / `.model.json` style suffixes.
std::string stem_without(const fs::path& p, const std::string& suffix) {
    std::string name = p.filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
        name.resize(name.size() - suffix.size());
    }
    return name;
}

/// Turns `--config` JSON into flags placed right after the subcommand path,
/// so explicit flags (which come later) take precedence.
std::vector<std::string> merge_config(std::vector<std::string> args) {
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
        } else if (args[i].starts_with("--config=")) {
            config_path = args[i].substr(9);
        }
    }
    if (config_path.empty()) {
        return args;
    }
    const auto bytes = read_file_bytes(config_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, "config " + config_path + ": " + e.what());
    }
    if (!j.is_object()) {
        throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
    }
    std::vector<std::string> injected;
    for (const auto& [key, value] : j.items()) {
        const std::string flag = "--" + key;
        if (value.is_boolean()) {
            if (value.get<bool>()) injected.push_back(flag);
        } else if (value.is_array()) {
            std::string joined;
            for (const auto& v : value) {
                if (!joined.empty()) joined += ',';
                joined += v.is_string() ? v.get<std::string>() : v.dump();
            }
            injected.push_back(flag);
            injected.push_back(joined);
        } else {
            injected.push_back(flag);
            injected.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    // Insert after the subcommand path (e.g. `synth toy`), wherever it sits.
    static const std::vector<std::string> top = {"calibrate", "score", "evaluate", "synth", "toy"};
    static const std::vector<std::string> nested = {"rayleigh", "toy", "augment", "train", "embed", "predict", "sweep"};
    auto in = [](const std::vector<std::string>& names, const std::string& s) {
        return std::find(names.begin(), names.end(), s) != names.end();
    };
    std::size_t pos = args.size();
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (in(top, args[i])) {
            pos = i + 1;
            if (pos < args.size() && in(nested, args[pos])) {
                ++pos;
            }
            break;
        }
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos), injected.begin(), injected.end());
    return args;
}

class Cli {
public:
    Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    int run(const std::vector<std::string>& raw_args);

private:
    fs::path out_path(const std::string& name) const {
        fs::path p(name);
        return p.is_relative() ? fs::path(global_.out_dir) / p : p;
    }

    void ensure_out_dir() const {
        std::error_code ec;
        fs::create_directories(global_.out_dir, ec);
        if (ec) {
            throw Error(ErrorKind::Io, "cannot create output directory " + global_.out_dir + ": " + ec.message());
        }
    }

    void setup(CLI::App& app);
    void add_calibrate(CLI::App& app);
    void add_score(CLI::App& app);
    void add_evaluate(CLI::App& app);
    void add_synth(CLI::App& app);
    void add_toy(CLI::App& app);

    void write_dataset(const std::string& name, const EmbeddingMatrix& data, const LabelVector* labels,
                       std::optional<std::pair<std::size_t, std::size_t>> shape, const std::string& notes,
                       const std::string& model_id = {});

    std::ostream& out_;
    std::ostream& err_;
    GlobalOptions global_;
    std::function<void()> action_;

    // calibrate
    std::string cal_reference, cal_out = "detector";
    std::size_t cal_k = 1;
    double cal_alpha = 0.01;
    bool cal_include_self = false;
    // score
    std::string score_detector, score_input, score_out;
    // evaluate
    std::string eval_manifest_list, eval_k_list, eval_out;
    std::vector<std::string> eval_detectors;
    double eval_alpha = -1.0;
    // synth
    std::size_t synth_count = 7200, synth_size = 64, synth_classes = 10, synth_per_class = 100, synth_copies = 1;
    double synth_scale = 1.0, synth_p_max = 0.0, synth_contrast = 6.0, synth_sigma = 1.2;
    std::int64_t synth_template_seed = -1;
    std::string synth_name, synth_input;
    // toy
    std::string toy_train, toy_val, toy_hidden = "128,64", toy_name = "model", toy_model, toy_input, toy_out,
                toy_sigma_grid;
    TrainConfig toy_cfg;
    std::size_t toy_instances = 1;
    bool toy_with_predictions = false;
};

void Cli::setup(CLI::App& app) {
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.fallthrough();
    app.require_subcommand(1);
    app.add_option("--seed", global_.seed, "Base seed for every random substream");
    app.add_option("--out-dir", global_.out_dir, "Directory for relative output paths");
    app.add_option("--format", global_.format, "Report format")->check(CLI::IsMember({"text", "csv", "json"}));
    app.add_option("--config", global_.config, "JSON file of flag defaults (explicit flags win)");
    add_calibrate(app);
    add_score(app);
    add_evaluate(app);
    add_synth(app);
    add_toy(app);
}

void Cli::add_calibrate(CLI::App& app) {
    auto* cmd = app.add_subcommand("calibrate", "Calibrate a deep kNN detector on reference embeddings");
    cmd->add_option("--reference", cal_reference, "Reference .emb or dataset manifest")->required();
    cmd->add_option("--k", cal_k, "Neighbor rank");
    cmd->add_option("--alpha", cal_alpha, "Type-1 error threshold");
    cmd->add_option("--out", cal_out, "Output stem for <stem>.detector.json and <stem>.reference.emb");
    cmd->add_flag("--include-self", cal_include_self, "Keep each point in its own neighbor list");
    cmd->callback([this] {
        action_ = [this] {
            const auto reference = load_matrix(cal_reference);
            const auto det = calibrate(reference, {cal_k, cal_alpha, !cal_include_self});
            ensure_out_dir();
            const auto paths = save_detector(det, out_path(cal_out));
            out_ << "n=" << det.n() << " k=" << det.k() << " alpha=" << format_number(det.alpha())
                 << " K=" << det.rank() << " T=" << format_number(det.threshold()) << '\n'
                 << "wrote " << paths.json.string() << " and " << paths.reference.string() << '\n';
        };
    });
}

void Cli::add_score(CLI::App& app) {
    auto* cmd = app.add_subcommand("score", "Score embeddings against a calibrated detector");
    cmd->add_option("--detector", score_detector, "<stem>.detector.json")->required();
    cmd->add_option("--input", score_input, "Query .emb or dataset manifest")->required();
    cmd->add_option("--out", score_out, "Verdict CSV path")->required();
    cmd->callback([this] {
        action_ = [this] {
            const auto det = load_detector(score_detector);
            const auto queries = load_matrix(score_input);
            if (queries.empty()) {
                throw Error(ErrorKind::EmptyInput, "input has no rows");
            }
            if (queries.dim() != det.dim()) {
                throw Error(ErrorKind::DimensionMismatch, "input dimension " + std::to_string(queries.dim()) +
                                                              " != detector dimension " + std::to_string(det.dim()));
            }
            const auto verdicts = det.batch_score(queries);
            std::ostringstream csv;
            csv << "index,distance,is_outlier\n";
            std::size_t outliers = 0;
            for (std::size_t i = 0; i < verdicts.size(); ++i) {
                csv << i << ',' << format_number(verdicts[i].distance) << ',' << (verdicts[i].is_outlier ? 1 : 0)
                    << '\n';
                outliers += verdicts[i].is_outlier ? 1 : 0;
            }
            ensure_out_dir();
            write_text(out_path(score_out), csv.str());
            char pct[32];
            std::snprintf(pct, sizeof pct, "%.1f%%", 100.0 * outlier_rate(verdicts));
            out_ << "outliers: " << outliers << " of " << verdicts.size() << " (" << pct << ")\n";
        };
    });
}

void Cli::add_evaluate(CLI::App& app) {
    auto* cmd = app.add_subcommand("evaluate", "Outlier, conditional-accuracy and correlation tables");
    cmd->add_option("--manifest-list", eval_manifest_list,
                    "JSON: {\"references\": [manifests], \"datasets\": [manifests]} or an array of dataset manifests")
        ->required();
    cmd->add_option("--detector", eval_detectors, "Detector JSON per model (model id = file stem)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    cmd->add_option("--k-list", eval_k_list, "Comma-separated k values (default 1)");
    cmd->add_option("--alpha", eval_alpha, "Type-1 error threshold (default: first detector's, else 0.01)");
    cmd->add_option("--out", eval_out, "Report path (default stdout)");
    cmd->callback([this] {
        action_ = [this] {
            const auto list_bytes = read_file_bytes(eval_manifest_list);
            nlohmann::json list;
            try {
                list = nlohmann::json::parse(list_bytes.begin(), list_bytes.end());
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorKind::InvalidArgument, "manifest list: " + std::string(e.what()));
            }
            const fs::path base = fs::path(eval_manifest_list).parent_path();
            auto resolve = [&](const std::string& p) {
                fs::path path(p);
                return path.is_relative() ? base / path : path;
            };
            std::vector<std::string> dataset_paths, reference_paths;
            try {
                if (list.is_array()) {
                    dataset_paths = list.get<std::vector<std::string>>();
                } else {
                    dataset_paths = list.at("datasets").get<std::vector<std::string>>();
                    reference_paths = list.value("references", std::vector<std::string>{});
                }
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorKind::InvalidArgument, "manifest list: " + std::string(e.what()));
            }

            std::vector<ModelReference> models;
            double alpha = eval_alpha;
            std::vector<CalibratedDetector> detectors;
            for (const auto& dpath : eval_detectors) {
                detectors.push_back(load_detector(dpath));
                models.push_back({stem_without(dpath, ".detector.json"), detectors.back().reference_latents()});
                if (alpha < 0.0) alpha = detectors.back().alpha();
            }
            for (const auto& rpath : reference_paths) {
                auto ds = load_dataset(resolve(rpath));
                models.push_back({ds.manifest.model_id, std::move(ds.embeddings)});
            }
            if (models.empty()) {
                throw Error(ErrorKind::InvalidArgument, "no references: pass --detector or list \"references\"");
            }
            if (alpha < 0.0) alpha = 0.01;
            const auto ks = eval_k_list.empty() ? std::vector<std::size_t>{1}
                                                : parse_list<std::size_t>(eval_k_list, "--k-list");

            std::vector<DatasetEmbeddings> datasets;
            std::vector<std::string> warnings;
            for (const auto& p : dataset_paths) {
                auto ds = load_dataset(resolve(p));
                if (ds.labels && !ds.predictions) {
                    warnings.push_back("dataset '" + ds.manifest.name + "' model '" + ds.manifest.model_id +
                                       "' has no predictions; accuracy cells are n/a");
                }
                datasets.push_back({ds.manifest.name, ds.manifest.model_id, std::move(ds.embeddings),
                                    std::move(ds.labels), std::move(ds.predictions)});
            }
            auto report = evaluate(models, datasets, ks, alpha);
            for (std::size_t i = 0; i < detectors.size(); ++i) {
                for (const auto& t : report.thresholds) {
                    if (t.model_id == models[i].model_id && t.k == detectors[i].k() &&
                        alpha == detectors[i].alpha() && t.threshold != detectors[i].threshold()) {
                        warnings.push_back("detector '" + models[i].model_id +
                                           "': recalibrated threshold differs from the stored one");
                    }
                }
            }
            report.warnings.insert(report.warnings.begin(), warnings.begin(), warnings.end());
            const auto format = parse_report_format(global_.format);
            const std::string text = render(report, format);
            if (eval_out.empty()) {
                out_ << text;
            } else {
                ensure_out_dir();
                write_text(out_path(eval_out), text);
                out_ << "wrote " << out_path(eval_out).string() << '\n';
            }
            for (const auto& w : report.warnings) {
                err_ << "warning: " << w << '\n';
            }
        };
    });
}

void Cli::write_dataset(const std::string& name, const EmbeddingMatrix& data, const LabelVector* labels,
                        std::optional<std::pair<std::size_t, std::size_t>> shape, const std::string& notes,
                        const std::string& model_id) {
    ensure_out_dir();
    DatasetManifest m;
    m.name = name;
    m.embeddings_path = out_path(name + ".emb");
    write_embeddings(data, m.embeddings_path);
    if (labels) {
        m.labels_path = out_path(name + ".lbl");
        write_labels(*labels, *m.labels_path);
    }
    m.model_id = model_id;
    m.seed = static_cast<std::int64_t>(global_.seed);
    m.notes = notes;
    m.image_shape = shape;
    write_manifest(m, out_path(name + ".manifest.json"));
    out_ << "wrote " << out_path(name + ".manifest.json").string() << " (" << data.rows() << " x " << data.dim()
         << ")\n";
}

void Cli::add_synth(CLI::App& app) {
    auto* synth = app.add_subcommand("synth", "Generate synthetic image datasets");
    synth->require_subcommand(1);

    auto* ray = synth->add_subcommand("rayleigh", "Rayleigh noise images in QPM format");
    ray->add_option("--count", synth_count, "Number of images");
    ray->add_option("--size", synth_size, "Image side length");
    ray->add_option("--scale", synth_scale, "Rayleigh scale");
    ray->add_option("--p-max", synth_p_max, "QPM saturation ceiling (default: 99.9th percentile)");
    ray->add_option("--name", synth_name, "Output name")->default_str("rayleigh");
    ray->callback([this] {
        action_ = [this] {
            if (synth_count == 0) {
                throw Error(ErrorKind::InvalidArgument, "--count must be >= 1");
            }
            const auto images = gen_rayleigh_images(synth_count, synth_size, synth_scale, global_.seed, synth_p_max);
            const std::string name = synth_name.empty() ? "rayleigh" : synth_name;
            write_dataset(name, images_to_matrix(images, name), nullptr, std::make_pair(synth_size, synth_size),
                          "Rayleigh(" + format_number(synth_scale) + ") noise, QPM-rescaled");
        };
    });

    auto* toy = synth->add_subcommand("toy", "Class-structured toy imagery");
    toy->add_option("--classes", synth_classes, "Number of classes");
    toy->add_option("--per-class", synth_per_class, "Images per class");
    toy->add_option("--size", synth_size, "Image side length");
    toy->add_option("--contrast", synth_contrast, "Class template contrast");
    toy->add_option("--template-seed", synth_template_seed, "Class template seed (default: --seed)");
    toy->add_option("--name", synth_name, "Output name")->default_str("toy");
    toy->callback([this] {
        action_ = [this] {
            if (synth_per_class == 0) {
                throw Error(ErrorKind::InvalidArgument, "--per-class must be >= 1");
            }
            ToyDatasetSpec spec;
            spec.num_classes = synth_classes;
            spec.per_class = synth_per_class;
            spec.size = synth_size;
            spec.template_contrast = synth_contrast;
            spec.sample_seed = global_.seed;
            spec.class_template_seed =
                synth_template_seed >= 0 ? static_cast<std::uint64_t>(synth_template_seed) : global_.seed;
            const auto ds = gen_toy_dataset(spec);
            const std::string name = synth_name.empty() ? "toy" : synth_name;
            write_dataset(name, images_to_matrix(ds.images, name), &ds.labels, std::make_pair(spec.size, spec.size),
                          "toy imagery, template seed " + std::to_string(spec.class_template_seed) + ", contrast " +
                              format_number(spec.template_contrast));
        };
    });

    auto* aug = synth->add_subcommand("augment", "Static additive Gaussian noise augmentation of a dataset");
    aug->add_option("--input", synth_input, "Dataset manifest")->required();
    aug->add_option("--sigma", synth_sigma, "Noise standard deviation");
    aug->add_option("--copies", synth_copies, "Augmented copies per image");
    aug->add_option("--name", synth_name, "Output name")->default_str("augmented");
    aug->callback([this] {
        action_ = [this] {
            if (synth_copies == 0) {
                throw Error(ErrorKind::InvalidArgument, "--copies must be >= 1");
            }
            const auto ds = load_dataset(synth_input);
            const auto [h, w] = ds.manifest.image_shape.value_or(std::make_pair<std::size_t, std::size_t>(1, ds.embeddings.dim()));
            const auto images = matrix_to_images(ds.embeddings, h, w);
            std::vector<Image> all;
            LabelVector labels;
            for (std::size_t c = 0; c < synth_copies; ++c) {
                auto copy = augment_all(images, synth_sigma, substream_seed(substream_seed(global_.seed, stream::kAugment), c));
                all.insert(all.end(), std::make_move_iterator(copy.begin()), std::make_move_iterator(copy.end()));
                if (ds.labels) {
                    labels.labels.insert(labels.labels.end(), ds.labels->labels.begin(), ds.labels->labels.end());
                }
            }
            const std::string name = synth_name.empty() ? "augmented" : synth_name;
            write_dataset(name, images_to_matrix(all, name), ds.labels ? &labels : nullptr, std::make_pair(h, w),
                          ds.manifest.name + " augmented with sigma " + format_number(synth_sigma));
        };
    });
}

namespace {

std::pair<std::vector<Image>, LabelVector> load_images(const fs::path& manifest) {
    auto ds = load_dataset(manifest);
    if (!ds.labels) {
        throw Error(ErrorKind::InvalidArgument, "dataset " + manifest.string() + " has no labels");
    }
    const auto [h, w] = ds.manifest.image_shape.value_or(std::make_pair<std::size_t, std::size_t>(1, ds.embeddings.dim()));
    return {matrix_to_images(ds.embeddings, h, w), *ds.labels};
}

}  // namespace

void Cli::add_toy(CLI::App& app) {
    auto* toy = app.add_subcommand("toy", "Train and apply the toy MLP encoder");
    toy->require_subcommand(1);

    auto add_train_flags = [this](CLI::App* cmd) {
        cmd->add_option("--train", toy_train, "Training dataset manifest")->required();
        cmd->add_option("--val", toy_val, "Validation dataset manifest (default: training set)");
        cmd->add_option("--hidden", toy_hidden, "Hidden layer widths; the last is the latent dimension");
        cmd->add_option("--epochs", toy_cfg.epochs, "Training epochs");
        cmd->add_option("--batch-size", toy_cfg.batch_size, "Mini-batch size");
        cmd->add_option("--lr", toy_cfg.learning_rate, "Adam learning rate");
        cmd->add_option("--adam-beta1", toy_cfg.adam_beta1, "Adam beta1");
        cmd->add_option("--adam-beta2", toy_cfg.adam_beta2, "Adam beta2");
        cmd->add_option("--adam-eps", toy_cfg.adam_eps, "Adam epsilon");
        cmd->add_option("--instances", toy_instances, "Ensemble size; instance i uses seed + i");
    };

    struct TrainInputs {
        std::vector<Image> train, val;
        LabelVector train_labels, val_labels;
        MlpArchitecture arch;
    };
    auto load_train_inputs = [this] {
        TrainInputs in;
        std::tie(in.train, in.train_labels) = load_images(toy_train);
        std::tie(in.val, in.val_labels) = toy_val.empty() ? std::make_pair(in.train, in.train_labels) : load_images(toy_val);
        in.arch.input_dim = in.train.front().size();
        in.arch.hidden_dims = parse_list<std::size_t>(toy_hidden, "--hidden");
        in.arch.num_classes = std::max(in.train_labels.num_classes(), in.val_labels.num_classes());
        return in;
    };

    auto* train = toy->add_subcommand("train", "Train an ensemble of toy encoders");
    add_train_flags(train);
    train->add_option("--sigma", toy_cfg.sigma_noise, "Dynamic augmentation noise level");
    train->add_option("--name", toy_name, "Output stem; instance i writes <name>_<i>.model.json");
    train->callback([this, load_train_inputs] {
        action_ = [this, load_train_inputs] {
            const auto in = load_train_inputs();
            const auto ensemble = train_ensemble(in.train, in.train_labels, in.arch, toy_cfg, in.val, in.val_labels,
                                                 toy_instances, global_.seed);
            ensure_out_dir();
            nlohmann::ordered_json summary;
            summary["sigma_noise"] = toy_cfg.sigma_noise;
            summary["instances"] = nlohmann::ordered_json::array();
            std::vector<double> accs;
            for (std::size_t i = 0; i < ensemble.size(); ++i) {
                const auto path = save_instance(ensemble[i], out_path(toy_name + "_" + std::to_string(i)));
                accs.push_back(ensemble[i].val_accuracy);
                summary["instances"].push_back({{"model", path.filename().string()},
                                                {"seed", ensemble[i].seed},
                                                {"val_accuracy", ensemble[i].val_accuracy}});
                out_ << path.string() << " seed=" << ensemble[i].seed
                     << " val_mean_class_accuracy=" << format_number(ensemble[i].val_accuracy) << '\n';
            }
            const auto stats = summary_stats(accs);
            summary["val_accuracy"] = {{"min", stats.min}, {"mean", stats.mean}, {"max", stats.max}};
            if (accs.size() >= 4) {
                const auto rep = select_representatives(accs);
                summary["representatives"] = {{"A", rep.a}, {"B", rep.b}, {"C", rep.c}, {"D", rep.d}};
            }
            write_text(out_path(toy_name + ".ensemble.json"), summary.dump(2) + "\n");
        };
    });

    auto* embed = toy->add_subcommand("embed", "Latent (last hidden layer) embeddings of a dataset");
    embed->add_option("--model", toy_model, "<stem>.model.json")->required();
    embed->add_option("--input", toy_input, "Dataset manifest or .emb of flattened images")->required();
    embed->add_option("--name", toy_out, "Output name for <name>.emb and <name>.manifest.json")->required();
    embed->add_flag("--with-predictions", toy_with_predictions, "Also write <name>.pred.lbl");
    embed->callback([this] {
        action_ = [this] {
            const auto inst = load_instance(toy_model);
            const fs::path input(toy_input);
            std::optional<Dataset> ds;
            EmbeddingMatrix pixels;
            if (is_manifest(input)) {
                ds = load_dataset(input);
                pixels = ds->embeddings;
            } else {
                pixels = read_embeddings(input);
            }
            const auto latent = extract_latent(inst.model, pixels);
            ensure_out_dir();
            DatasetManifest m;
            m.name = ds ? ds->manifest.name : toy_out;
            m.model_id = stem_without(toy_model, ".model.json");
            m.embeddings_path = out_path(toy_out + ".emb");
            write_embeddings(latent, m.embeddings_path);
            if (ds && ds->manifest.labels_path) {
                m.labels_path = out_path(toy_out + ".lbl");
                write_labels(*ds->labels, *m.labels_path);
            }
            if (toy_with_predictions) {
                m.predictions_path = out_path(toy_out + ".pred.lbl");
                write_labels(predict(inst.model, pixels), *m.predictions_path);
            }
            m.seed = static_cast<std::int64_t>(inst.seed);
            m.notes = "latent embeddings from " + fs::path(toy_model).filename().string();
            write_manifest(m, out_path(toy_out + ".manifest.json"));
            out_ << "wrote " << m.embeddings_path.string() << " (" << latent.rows() << " x " << latent.dim() << ")\n";
        };
    });

    auto* pred = toy->add_subcommand("predict", "Predicted class ids of a dataset");
    pred->add_option("--model", toy_model, "<stem>.model.json")->required();
    pred->add_option("--input", toy_input, "Dataset manifest or .emb of flattened images")->required();
    pred->add_option("--out", toy_out, "Output .lbl path")->required();
    pred->callback([this] {
        action_ = [this] {
            const auto inst = load_instance(toy_model);
            const auto labels = predict(inst.model, load_matrix(toy_input));
            ensure_out_dir();
            write_labels(labels, out_path(toy_out));
            out_ << "wrote " << out_path(toy_out).string() << " (" << labels.size() << " predictions)\n";
        };
    });

    auto* sweep = toy->add_subcommand("sweep", "Validation accuracy across augmentation noise levels");
    add_train_flags(sweep);
    sweep->add_option("--sigma-grid", toy_sigma_grid, "Comma-separated noise levels")->required();
    sweep->callback([this, load_train_inputs] {
        action_ = [this, load_train_inputs] {
            const auto grid = parse_list<double>(toy_sigma_grid, "--sigma-grid");
            const auto in = load_train_inputs();
            const auto format = parse_report_format(global_.format);
            nlohmann::ordered_json rows = nlohmann::ordered_json::array();
            std::ostringstream text, csv;
            csv << "sigma_noise,instances,min,mean,max\n";
            text << "sigma_noise  instances  min    mean   max\n";
            for (double sigma : grid) {
                TrainConfig cfg = toy_cfg;
                cfg.sigma_noise = sigma;
                const auto ensemble = train_ensemble(in.train, in.train_labels, in.arch, cfg, in.val, in.val_labels,
                                                     toy_instances, global_.seed);
                std::vector<double> accs;
                for (const auto& inst : ensemble) accs.push_back(inst.val_accuracy);
                const auto s = summary_stats(accs);
                rows.push_back({{"sigma_noise", sigma}, {"instances", accs.size()}, {"min", s.min}, {"mean", s.mean},
                                {"max", s.max}});
                csv << format_number(sigma) << ',' << accs.size() << ',' << format_number(s.min) << ','
                    << format_number(s.mean) << ',' << format_number(s.max) << '\n';
                char line[128];
                std::snprintf(line, sizeof line, "%-11s  %9zu  %.3f  %.3f  %.3f\n", format_number(sigma).c_str(),
                              accs.size(), s.min, s.mean, s.max);
                text << line;
            }
            switch (format) {
                case ReportFormat::Text: out_ << text.str(); break;
                case ReportFormat::Csv: out_ << csv.str(); break;
                case ReportFormat::Json: out_ << rows.dump(2) << '\n'; break;
            }
        };
    });
}

int Cli::run(const std::vector<std::string>& raw_args) {
    CLI::App app{"Deep kNN latent-space out-of-distribution audit toolkit", "latent_audit"};
    setup(app);
    try {
        auto args = merge_config(raw_args);
        std::reverse(args.begin(), args.end());
        try {
            app.parse(args);
        } catch (const CLI::CallForHelp&) {
            out_ << app.help();
            return kExitOk;
        } catch (const CLI::CallForAllHelp&) {
            out_ << app.help("", CLI::AppFormatMode::All);
            return kExitOk;
        } catch (const CLI::ParseError& e) {
            err_ << "error: " << e.what() << '\n';
            return kExitValidation;
        }
        if (action_) {
            action_();
        }
        return kExitOk;
    } catch (const Error& e) {
        err_ << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::Io ? kExitIo : kExitValidation;
    } catch (const std::exception& e) {
        err_ << "error: " << e.what() << '\n';
        return kExitIo;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Cli cli(out, err);
    return cli.run(args);
}

}  // namespace latent_audit
