// binsight: binary-to-image featurization and random-forest family
// classification from the command line.
//
// Exit codes: 0 success, 1 data/model error, 2 usage/config error.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "binsight/binsight.hpp"

namespace fs = std::filesystem;
using namespace binsight;

namespace {

constexpr int kOk = 0;
constexpr int kDataError = 1;
constexpr int kUsageError = 2;

/// Usage/config failure (exit 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& data) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

Dataset read_csv_file(const fs::path& path) {
    try {
        return load_csv(read_text(path));
    } catch (const ParseError& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

fs::path sibling(const fs::path& report, const std::string& suffix) {
    fs::path p = report;
    p.replace_extension();
    return fs::path(p.string() + suffix);
}

struct FeatureFlags {
    std::size_t side = 32;
    std::string interp = "nearest";
    std::string width_rule_file;

    void add_to(CLI::App* app) {
        app->add_option("--side", side, "Side n of the resized n x n image")->check(CLI::Range(2, 4096));
        app->add_option("--interp", interp, "Resize interpolation")
            ->check(CLI::IsMember({"nearest", "bilinear"}));
        app->add_option("--width-rule", width_rule_file, "Width-rule file ('<max_bytes> <width>' lines, '* <width>' last)");
    }

    FeatureConfig resolve() const {
        FeatureConfig cfg;
        cfg.side = side;
        cfg.interpolation = interp == "bilinear" ? Interpolation::bilinear : Interpolation::nearest;
        if (!width_rule_file.empty()) {
            try {
                cfg.width_rule = parse_width_rule(read_text(width_rule_file));
            } catch (const Error& e) {
                throw UsageError(width_rule_file + ": " + e.what());
            }
        }
        return cfg;
    }
};

struct ForestFlags {
    std::size_t trees = 500;
    std::optional<std::size_t> mtry;
    std::size_t min_node = 1;
    std::optional<std::size_t> depth;
    bool no_bootstrap = false;

    void add_to(CLI::App* app) {
        app->add_option("--trees", trees, "Number of trees")->check(CLI::PositiveNumber);
        app->add_option("--mtry", mtry, "Features tried per node (default floor(sqrt(p)))")->check(CLI::PositiveNumber);
        app->add_option("--min-node", min_node, "Minimum samples per leaf")->check(CLI::PositiveNumber);
        app->add_option("--depth", depth, "Maximum tree depth (default unlimited)")->check(CLI::NonNegativeNumber);
        app->add_flag("--no-bootstrap", no_bootstrap, "Grow every tree on the full training set");
    }

    ForestConfig resolve(std::uint64_t seed) const {
        ForestConfig cfg;
        cfg.n_trees = trees;
        cfg.mtry = mtry;
        cfg.min_node_size = min_node;
        cfg.max_depth = depth;
        cfg.bootstrap = !no_bootstrap;
        cfg.seed = seed;
        return cfg;
    }
};

std::string summary(const EvalReport& r) {
    return "accuracy=" + detail::fixed(r.accuracy, 4) + " kappa=" + (r.kappa ? detail::fixed(*r.kappa, 4) : "NA") +
           " lower=" + detail::fixed(r.accuracy_lower, 4) + " upper=" + detail::fixed(r.accuracy_upper, 4) +
           " n=" + std::to_string(r.n);
}

void write_eval_artifacts(const fs::path& report_path, const std::string& report_text, const ConfusionMatrix& cm,
                          std::size_t heatmap_scale) {
    write_text(report_path, report_text);
    write_text(sibling(report_path, ".confusion.csv"), confusion_csv(cm));
    write_text(sibling(report_path, ".heatmap.pgm"), export_pgm(export_heatmap(cm, heatmap_scale)));
}

void check_lengths(const ForestModel& model, const Dataset& ds) {
    if (model.feature_len != ds.feature_len()) {
        throw ShapeMismatch("feature length mismatch: model expects " + std::to_string(model.feature_len) +
                            ", data has " + std::to_string(ds.feature_len()));
    }
}

// ---------------------------------------------------------------------------

int cmd_featurize(const std::string& input_dir, const std::string& labels, const std::string& out_csv,
                  const FeatureFlags& flags, bool strict, const std::string& pgm_dir) {
    const FeatureConfig config = flags.resolve();
    std::error_code ec;
    if (!fs::is_directory(input_dir, ec)) throw UsageError("cannot read directory '" + input_dir + "'");

    std::optional<std::map<std::string, std::string>> manifest;
    fs::path manifest_path;
    if (!labels.empty()) {
        manifest_path = fs::weakly_canonical(labels);
        try {
            manifest = parse_manifest(read_text(labels));
        } catch (const ParseError& e) {
            throw UsageError(labels + ": " + e.what());
        }
    }

    std::vector<fs::path> files;
    for (fs::recursive_directory_iterator it(input_dir, ec), end; it != end; it.increment(ec)) {
        if (ec) throw UsageError("cannot read directory '" + input_dir + "': " + ec.message());
        if (!it->is_regular_file()) continue;
        if (manifest && fs::weakly_canonical(it->path()) == manifest_path) continue;
        files.push_back(it->path());
    }
    if (ec) throw UsageError("cannot read directory '" + input_dir + "': " + ec.message());
    std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
        return fs::relative(a, input_dir).generic_string() < fs::relative(b, input_dir).generic_string();
    });

    struct Item {
        std::string rel;
        std::string label;
        FeatureVector features;
        std::string error;
    };
    std::vector<Item> items(files.size());
    parallel_for(files.size(), default_threads(), [&](std::size_t i) {
        auto& item = items[i];
        item.rel = fs::relative(files[i], input_dir).generic_string();
        if (manifest) {
            auto it = manifest->find(item.rel);
            if (it == manifest->end()) it = manifest->find(files[i].filename().string());
            if (it == manifest->end()) {
                item.error = "not listed in the label manifest";
                return;
            }
            item.label = it->second;
        } else {
            item.label = fs::weakly_canonical(files[i]).parent_path().filename().string();
        }
        try {
            const RawBinary raw = read_binary(files[i]);
            item.features = featurize(raw, config);
            if (!pgm_dir.empty()) {
                const auto img = resize_image(bytes_to_image(raw, config.width_rule), config.side, config.interpolation);
                write_text(fs::path(pgm_dir) / (item.rel + ".pgm"), export_pgm(img));
            }
        } catch (const Error& e) {
            item.error = e.what();
        }
    });

    std::set<std::string> names;
    std::size_t failures = 0;
    for (const auto& item : items) {
        if (!item.error.empty()) {
            std::cerr << "binsight: " << item.rel << ": " << item.error << "\n";
            ++failures;
        } else {
            names.insert(item.label);
        }
    }
    if (strict && failures > 0) {
        std::cerr << "binsight: " << failures << " file(s) failed; aborting (--strict)\n";
        return kDataError;
    }
    Dataset ds(std::vector<std::string>(names.begin(), names.end()), config.feature_len());
    for (auto& item : items) {
        if (!item.error.empty()) continue;
        ds.add({std::move(item.features), *ds.label_index(item.label), item.rel});
    }
    write_text(out_csv, write_csv(ds));
    std::cout << "featurized " << ds.size() << " file(s) into " << out_csv << " (" << names.size()
              << " families, " << failures << " skipped)\n";
    return kOk;
}

int cmd_synth(const std::string& spec_file, std::uint64_t seed, const std::string& out_dir) {
    SynthSpec spec;
    try {
        spec = parse_synth_spec(read_text(spec_file));
    } catch (const Error& e) {
        throw UsageError(spec_file + ": " + e.what());
    }
    std::cout << "seed=" << seed << "\n";
    const auto corpus = synth_families(spec, seed);
    fs::create_directories(out_dir);
    for (const auto& s : corpus) {
        write_text(fs::path(out_dir) / s.filename, std::string(s.bytes.begin(), s.bytes.end()));
    }
    write_text(fs::path(out_dir) / "manifest.tsv", synth_manifest(corpus));
    std::cout << "wrote " << corpus.size() << " file(s) and manifest.tsv to " << out_dir << "\n";
    return kOk;
}

int cmd_split(const std::string& in_csv, double fraction, std::uint64_t seed, const std::string& out_train,
              const std::string& out_test) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("--fraction must lie in (0, 1)");
    std::cout << "seed=" << seed << "\n";
    const Dataset ds = read_csv_file(in_csv);
    const auto split = stratified_split(ds, fraction, seed);
    write_text(out_train, write_csv(split.train));
    write_text(out_test, write_csv(split.test));
    std::cout << "train=" << split.train.size() << " test=" << split.test.size() << "\n";
    return kOk;
}

int cmd_train(const std::string& train_csv, const ForestFlags& flags, std::uint64_t seed, const std::string& out,
              bool oob) {
    std::cout << "seed=" << seed << "\n";
    const Dataset ds = read_csv_file(train_csv);
    const ForestConfig config = flags.resolve(seed);
    try {
        config.validate(ds.feature_len());
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const ForestModel model = train_forest(ds, config);
    write_text(out, save_model(model));
    std::cout << "trained " << model.trees.size() << " tree(s), mtry=" << *model.config.mtry << ", on "
              << ds.size() << " sample(s)";
    if (oob) std::cout << " oob_accuracy=" << detail::fixed(oob_accuracy(model, ds), 4);
    std::cout << "\n";
    return kOk;
}

int cmd_predict(const std::string& model_file, const std::string& input, const FeatureFlags& flags,
                bool side_given) {
    const ForestModel model = load_model(read_text(model_file));
    const std::string head = [&] {
        std::ifstream in(input, std::ios::binary);
        if (!in) throw Error("cannot open '" + input + "'");
        std::string h(3, '\0');
        in.read(h.data(), 3);
        h.resize(static_cast<std::size_t>(in.gcount()));
        return h;
    }();

    auto print = [&](std::string_view prefix, std::span<const Byte> features) {
        const auto proba = model.predict_proba(features);
        const std::size_t c = model.predict(features);
        if (!prefix.empty()) std::cout << prefix << '\t';
        std::cout << model.label_names[c] << '\t' << detail::fixed(proba[c], 4) << '\n';
    };

    if (head == "f0,") {
        const Dataset ds = read_csv_file(input);
        check_lengths(model, ds);
        for (const auto& s : ds.samples()) print({}, s.features);
        return kOk;
    }
    FeatureConfig config = flags.resolve();
    if (!side_given) {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(model.feature_len))));
        config.side = side;
    }
    if (config.feature_len() != model.feature_len) {
        throw ShapeMismatch("feature length mismatch: model expects " + std::to_string(model.feature_len) +
                            ", --side " + std::to_string(config.side) + " gives " +
                            std::to_string(config.feature_len()));
    }
    const auto features = featurize(read_binary(input), config);
    print({}, features);
    return kOk;
}

int cmd_eval(const std::string& model_file, const std::string& test_csv, const std::string& out_report,
             std::size_t heatmap_scale) {
    const ForestModel model = load_model(read_text(model_file));
    const Dataset test = read_csv_file(test_csv);
    check_lengths(model, test);
    const EvalReport report = evaluate(model, test);
    write_eval_artifacts(out_report, format_report(report), report.confusion, heatmap_scale);
    std::cout << summary(report) << "\n";
    return kOk;
}

int cmd_cv(const std::string& train_csv, std::size_t folds, const ForestFlags& flags, std::uint64_t seed,
           const std::string& out_report, std::size_t heatmap_scale) {
    std::cout << "seed=" << seed << "\n";
    const Dataset ds = read_csv_file(train_csv);
    const ForestConfig config = flags.resolve(seed);
    try {
        config.validate(ds.feature_len());
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const CVResult cv = cross_validate(ds, folds, config, seed);
    write_eval_artifacts(out_report, format_cv_report(cv), cv.pooled_confusion, heatmap_scale);
    std::cout << summary(cv.pooled_report) << " mean_fold_accuracy=" << detail::fixed(cv.mean_accuracy, 4) << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"binsight: classify binaries into families from their grayscale-image features"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    FeatureFlags feature_flags;
    ForestFlags forest_flags;
    std::size_t heatmap_scale = 16;
    int rc = kOk;

    // featurize
    auto* featurize_cmd = app.add_subcommand("featurize", "Turn a directory of binaries into a labeled CSV");
    std::string in_dir, labels, out_csv, pgm_dir;
    bool strict = false;
    featurize_cmd->add_option("input_dir", in_dir, "Directory of binaries (one sub-directory per family)")->required();
    featurize_cmd->add_option("-o,--out", out_csv, "Output CSV")->required();
    featurize_cmd->add_option("--labels", labels, "Manifest of 'filename<TAB>family' lines");
    featurize_cmd->add_option("--pgm-dir", pgm_dir, "Also dump each resized image as PGM here");
    featurize_cmd->add_flag("--strict", strict, "Fail if any file cannot be featurized");
    feature_flags.add_to(featurize_cmd);
    featurize_cmd->callback([&] { rc = cmd_featurize(in_dir, labels, out_csv, feature_flags, strict, pgm_dir); });

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic family corpus from a spec file");
    std::string spec_file, out_dir;
    synth_cmd->add_option("spec", spec_file, "Synth spec file")->required();
    synth_cmd->add_option("-o,--out", out_dir, "Output directory")->required();
    synth_cmd->add_option("--seed", seed, "Random seed");
    synth_cmd->callback([&] { rc = cmd_synth(spec_file, seed, out_dir); });

    // split
    auto* split_cmd = app.add_subcommand("split", "Stratified train/test split of a CSV");
    std::string split_in, out_train, out_test;
    double fraction = 0.8;
    split_cmd->add_option("input", split_in, "Input CSV")->required();
    split_cmd->add_option("--fraction", fraction, "Training fraction in (0, 1)");
    split_cmd->add_option("--seed", seed, "Random seed");
    split_cmd->add_option("--train", out_train, "Output training CSV")->required();
    split_cmd->add_option("--test", out_test, "Output test CSV")->required();
    split_cmd->callback([&] { rc = cmd_split(split_in, fraction, seed, out_train, out_test); });

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a random forest on a CSV");
    std::string train_csv, model_out;
    bool oob = false;
    train_cmd->add_option("input", train_csv, "Training CSV")->required();
    train_cmd->add_option("-o,--out", model_out, "Output model file")->required();
    train_cmd->add_option("--seed", seed, "Random seed");
    train_cmd->add_flag("--oob", oob, "Report out-of-bag accuracy");
    forest_flags.add_to(train_cmd);
    train_cmd->callback([&] { rc = cmd_train(train_csv, forest_flags, seed, model_out, oob); });

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "Predict families for a CSV or a single raw binary");
    std::string predict_model, predict_input;
    predict_cmd->add_option("model", predict_model, "Model file")->required();
    predict_cmd->add_option("input", predict_input, "CSV file or raw binary")->required();
    feature_flags.add_to(predict_cmd);
    predict_cmd->callback([&] {
        rc = cmd_predict(predict_model, predict_input, feature_flags, predict_cmd->count("--side") > 0);
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a held-out CSV");
    std::string eval_model, eval_csv, eval_out;
    eval_cmd->add_option("model", eval_model, "Model file")->required();
    eval_cmd->add_option("input", eval_csv, "Test CSV")->required();
    eval_cmd->add_option("-o,--out", eval_out, "Report file (confusion CSV and heatmap PGM written beside it)")
        ->required();
    eval_cmd->add_option("--heatmap-scale", heatmap_scale, "Pixels per confusion cell")->check(CLI::PositiveNumber);
    eval_cmd->callback([&] { rc = cmd_eval(eval_model, eval_csv, eval_out, heatmap_scale); });

    // cv
    auto* cv_cmd = app.add_subcommand("cv", "Stratified k-fold cross-validation on a CSV");
    std::string cv_csv, cv_out;
    std::size_t folds = 10;
    cv_cmd->add_option("input", cv_csv, "Training CSV")->required();
    cv_cmd->add_option("-o,--out", cv_out, "Report file (confusion CSV and heatmap PGM written beside it)")->required();
    cv_cmd->add_option("--folds", folds, "Number of folds")->check(CLI::Range(2, 1'000'000));
    cv_cmd->add_option("--seed", seed, "Random seed");
    cv_cmd->add_option("--heatmap-scale", heatmap_scale, "Pixels per confusion cell")->check(CLI::PositiveNumber);
    forest_flags.add_to(cv_cmd);
    cv_cmd->callback([&] { rc = cmd_cv(cv_csv, folds, forest_flags, seed, cv_out, heatmap_scale); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    } catch (const UsageError& e) {
        std::cerr << "binsight: " << e.what() << "\n";
        return kUsageError;
    } catch (const StratificationError& e) {
        std::cerr << "binsight: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        std::cerr << "binsight: " << e.what() << "\n";
        return kDataError;
    }
    return rc;
}
