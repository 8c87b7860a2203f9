#pragma once

// Confusion matrices and the metrics reported from them: overall accuracy,
// per-class recall, Cohen's kappa and an exact (Clopper-Pearson) binomial
// interval on accuracy. Rows are the actual class, columns the predicted one.

#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "binsight/dataset.hpp"
#include "binsight/error.hpp"
#include "binsight/featurize.hpp"
#include "binsight/forest.hpp"
#include "binsight/parallel.hpp"
#include "binsight/rng.hpp"

namespace binsight {

class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::vector<std::string> label_names)
        : label_names_(std::move(label_names)), counts_(label_names_.size() * label_names_.size(), 0) {}

    /// From a row-major k x k grid; label names default to "0".."k-1".
    static ConfusionMatrix from_counts(const std::vector<std::vector<std::uint64_t>>& grid,
                                       std::vector<std::string> label_names = {}) {
        const std::size_t k = grid.size();
        if (label_names.empty()) {
            for (std::size_t c = 0; c < k; ++c) label_names.push_back(std::to_string(c));
        }
        if (label_names.size() != k) throw InvalidArgument("label count does not match matrix size");
        ConfusionMatrix cm(std::move(label_names));
        for (std::size_t r = 0; r < k; ++r) {
            if (grid[r].size() != k) throw InvalidArgument("confusion matrix must be square");
            for (std::size_t c = 0; c < k; ++c) cm.at(r, c) = grid[r][c];
        }
        return cm;
    }

    std::size_t size() const noexcept { return label_names_.size(); }
    const std::vector<std::string>& label_names() const noexcept { return label_names_; }
    std::uint64_t at(std::size_t actual, std::size_t predicted) const { return counts_[actual * size() + predicted]; }
    std::uint64_t& at(std::size_t actual, std::size_t predicted) { return counts_[actual * size() + predicted]; }

    void add(std::size_t actual, std::size_t predicted) {
        if (actual >= size() || predicted >= size()) throw InvalidArgument("class index out of range");
        ++at(actual, predicted);
    }
    void merge(const ConfusionMatrix& other) {
        if (other.size() != size()) throw InvalidArgument("cannot merge matrices of different size");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    }

    std::uint64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }
    std::uint64_t trace() const {
        std::uint64_t t = 0;
        for (std::size_t c = 0; c < size(); ++c) t += at(c, c);
        return t;
    }
    std::uint64_t row_total(std::size_t r) const {
        std::uint64_t t = 0;
        for (std::size_t c = 0; c < size(); ++c) t += at(r, c);
        return t;
    }
    std::uint64_t col_total(std::size_t c) const {
        std::uint64_t t = 0;
        for (std::size_t r = 0; r < size(); ++r) t += at(r, c);
        return t;
    }

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::vector<std::string> label_names_;
    std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> truths,
                                 std::vector<std::string> label_names) {
    if (predictions.size() != truths.size()) throw InvalidArgument("prediction/truth length mismatch");
    ConfusionMatrix cm(std::move(label_names));
    for (std::size_t i = 0; i < truths.size(); ++i) cm.add(truths[i], predictions[i]);
    return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
    const auto n = cm.total();
    if (n == 0) throw InvalidArgument("accuracy of an empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

/// Recall per actual class; nullopt for classes with no samples.
inline std::vector<std::optional<double>> per_class_recall(const ConfusionMatrix& cm) {
    std::vector<std::optional<double>> out(cm.size());
    for (std::size_t c = 0; c < cm.size(); ++c) {
        if (const auto row = cm.row_total(c); row > 0) {
            out[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
        }
    }
    return out;
}

/// Cohen's kappa. Computed as (N*trace - sum row_c*col_c) / (N^2 - sum row_c*col_c)
/// in exact integers, so the only rounding is the final division.
inline double kappa(const ConfusionMatrix& cm) {
    const auto n = static_cast<unsigned __int128>(cm.total());
    if (n == 0) throw InvalidArgument("kappa of an empty confusion matrix");
    unsigned __int128 chance = 0;
    for (std::size_t c = 0; c < cm.size(); ++c) {
        chance += static_cast<unsigned __int128>(cm.row_total(c)) * cm.col_total(c);
    }
    const unsigned __int128 nn = n * n;
    if (chance == nn) throw Undefined("kappa is undefined when expected agreement is 1");
    const auto observed = n * cm.trace();
    // Both terms are exact in a double for N below ~9e7.
    const double num = static_cast<double>(observed) - static_cast<double>(chance);
    const double den = static_cast<double>(nn - chance);
    return num / den;
}

struct Interval {
    double lower = 0.0;
    double upper = 1.0;
};

/// Exact two-sided binomial interval for `correct` successes in `total` trials.
inline Interval accuracy_ci(std::uint64_t correct, std::uint64_t total, double level = 0.95) {
    if (total == 0 || correct > total) throw InvalidArgument("accuracy_ci needs 0 <= correct <= total, total >= 1");
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
    const double alpha = 1.0 - level;
    const auto c = static_cast<double>(correct);
    const auto n = static_cast<double>(total);
    Interval out;
    if (correct > 0) out.lower = boost::math::ibeta_inv(c, n - c + 1.0, alpha / 2.0);
    if (correct < total) out.upper = boost::math::ibeta_inv(c + 1.0, n - c, 1.0 - alpha / 2.0);
    return out;
}

struct EvalReport {
    double accuracy = 0.0;
    std::optional<double> kappa;  // nullopt when undefined
    double accuracy_lower = 0.0;
    double accuracy_upper = 1.0;
    std::vector<std::optional<double>> per_class_recall;
    ConfusionMatrix confusion;
    std::uint64_t n = 0;
};

inline EvalReport make_report(const ConfusionMatrix& cm, double level = 0.95) {
    EvalReport r;
    r.n = cm.total();
    r.accuracy = accuracy(cm);
    try {
        r.kappa = kappa(cm);
    } catch (const Undefined&) {
    }
    const auto ci = accuracy_ci(cm.trace(), r.n, level);
    r.accuracy_lower = ci.lower;
    r.accuracy_upper = ci.upper;
    r.per_class_recall = per_class_recall(cm);
    r.confusion = cm;
    return r;
}

/// Model predictions for every sample of `ds` (which must share the model's
/// vocabulary), computed in parallel into fixed slots.
inline std::vector<std::size_t> predict_all(const ForestModel& model, const Dataset& ds,
                                            unsigned threads = default_threads()) {
    if (ds.feature_len() != model.feature_len) {
        throw ShapeMismatch("data has " + std::to_string(ds.feature_len()) + " features, model expects " +
                            std::to_string(model.feature_len));
    }
    std::vector<std::size_t> out(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t i) { out[i] = model.predict(ds[i].features); });
    return out;
}

inline EvalReport evaluate(const ForestModel& model, const Dataset& test, unsigned threads = default_threads()) {
    if (test.empty()) throw InvalidArgument("cannot evaluate on an empty test set");
    const Dataset ds = test.with_vocabulary(model.label_names);
    const auto preds = predict_all(model, ds, threads);
    std::vector<std::size_t> truths(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) truths[i] = ds[i].label;
    return make_report(confusion(preds, truths, model.label_names));
}

struct CVResult {
    std::vector<double> fold_accuracies;
    double mean_accuracy = 0.0;
    ConfusionMatrix pooled_confusion;
    EvalReport pooled_report;
    std::vector<std::size_t> predictions;  // out-of-fold prediction per sample
    FoldAssignment folds;
};

/// Stratified k-fold cross-validation. Fold i trains on every other fold with
/// the forest seed replaced by one derived from (seed, i) and predicts fold
/// i; the pooled matrix collects every out-of-fold prediction.
inline CVResult cross_validate(const Dataset& train, std::size_t k, const ForestConfig& forest_config,
                               std::uint64_t seed, unsigned threads = default_threads()) {
    CVResult out;
    out.folds = stratified_folds(train, k, seed);
    out.pooled_confusion = ConfusionMatrix(train.label_names());
    out.predictions.assign(train.size(), 0);
    const Rng base(seed, streams::cv);
    for (std::size_t fold = 0; fold < k; ++fold) {
        const auto held = out.folds.members(fold);
        if (held.empty()) throw InvalidArgument("fold " + std::to_string(fold) + " is empty; use fewer folds");
        const auto rest = out.folds.complement(fold);
        ForestConfig config = forest_config;
        config.seed = base.split(fold).next();
        const ForestModel model = train_forest(train.subset(rest), config, threads);
        const Dataset validation = train.subset(held);
        const auto preds = predict_all(model, validation, threads);
        std::uint64_t correct = 0;
        for (std::size_t j = 0; j < held.size(); ++j) {
            out.predictions[held[j]] = preds[j];
            out.pooled_confusion.add(validation[j].label, preds[j]);
            if (preds[j] == validation[j].label) ++correct;
        }
        out.fold_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(held.size()));
    }
    double sum = 0.0;
    for (double a : out.fold_accuracies) sum += a;
    out.mean_accuracy = sum / static_cast<double>(k);
    out.pooled_report = make_report(out.pooled_confusion);
    return out;
}

/// Row-normalized heatmap: pixel (r, c) = round(255 * count / row_total),
/// half-up, 0 for empty rows. Each cell becomes a scale x scale block.
inline GrayImage export_heatmap(const ConfusionMatrix& cm, std::size_t scale = 1) {
    if (cm.size() == 0) throw InvalidArgument("empty confusion matrix");
    if (scale == 0) throw InvalidArgument("heatmap scale must be >= 1");
    const std::size_t k = cm.size();
    GrayImage img(k * scale, k * scale);
    for (std::size_t r = 0; r < k; ++r) {
        const auto row = cm.row_total(r);
        for (std::size_t c = 0; c < k; ++c) {
            Byte v = 0;
            if (row > 0) {
                const auto num = static_cast<unsigned __int128>(cm.at(r, c)) * 255 * 2 + row;
                v = static_cast<Byte>(num / (static_cast<unsigned __int128>(row) * 2));
            }
            for (std::size_t dy = 0; dy < scale; ++dy) {
                for (std::size_t dx = 0; dx < scale; ++dx) img.at(r * scale + dy, c * scale + dx) = v;
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Text outputs.

namespace detail {

inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string opt(const std::optional<double>& v) { return v ? fixed(*v) : std::string("NA"); }

}  // namespace detail

/// Flat `key = value` document. Undefined values print as NA.
inline std::string format_report(const EvalReport& r) {
    std::string out;
    out += "accuracy = " + detail::fixed(r.accuracy) + "\n";
    out += "kappa = " + detail::opt(r.kappa) + "\n";
    out += "accuracy_lower = " + detail::fixed(r.accuracy_lower) + "\n";
    out += "accuracy_upper = " + detail::fixed(r.accuracy_upper) + "\n";
    out += "n = " + std::to_string(r.n) + "\n";
    out += "correct = " + std::to_string(r.confusion.trace()) + "\n";
    out += "orientation = rows are actual class, columns are predicted class\n";
    for (std::size_t c = 0; c < r.per_class_recall.size(); ++c) {
        out += "recall." + r.confusion.label_names()[c] + " = " + detail::opt(r.per_class_recall[c]) + "\n";
    }
    return out;
}

inline std::string format_cv_report(const CVResult& cv) {
    std::string out;
    out += "folds = " + std::to_string(cv.fold_accuracies.size()) + "\n";
    out += "mean_fold_accuracy = " + detail::fixed(cv.mean_accuracy) + "\n";
    for (std::size_t i = 0; i < cv.fold_accuracies.size(); ++i) {
        out += "fold_accuracy." + std::to_string(i) + " = " + detail::fixed(cv.fold_accuracies[i]) + "\n";
    }
    out += format_report(cv.pooled_report);
    return out;
}

/// Confusion counts as CSV: header `actual\predicted,<names...>`, then one
/// row per actual class led by its name.
inline std::string confusion_csv(const ConfusionMatrix& cm) {
    std::string out = "actual\\predicted";
    for (const auto& name : cm.label_names()) out += "," + name;
    out += "\n";
    for (std::size_t r = 0; r < cm.size(); ++r) {
        out += cm.label_names()[r];
        for (std::size_t c = 0; c < cm.size(); ++c) out += "," + std::to_string(cm.at(r, c));
        out += "\n";
    }
    return out;
}

}  // namespace binsight
