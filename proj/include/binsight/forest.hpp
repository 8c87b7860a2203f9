#pragma once

// Random forest of CART classification trees over byte-valued features.
//
// Trees split on Gini impurity with thresholds at midpoints between
// consecutive distinct feature values; each node searches a fresh random
// subset of mtry features drawn without replacement; each tree is grown on a
// bootstrap resample; prediction is a majority vote of per-tree argmax leaves.
// Every tie is broken toward the lowest index, and tree t draws only from the
// generator stream (seed, t), so a model is a pure function of its training
// data and configuration regardless of thread count.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "binsight/dataset.hpp"
#include "binsight/error.hpp"
#include "binsight/parallel.hpp"
#include "binsight/rng.hpp"

namespace binsight {

struct ForestConfig {
    std::size_t n_trees = 500;
    std::optional<std::size_t> mtry;  // default floor(sqrt(feature_len))
    std::size_t min_node_size = 1;
    std::optional<std::size_t> max_depth;
    bool bootstrap = true;
    std::uint64_t seed = 0;

    std::size_t resolved_mtry(std::size_t feature_len) const {
        if (mtry) return *mtry;
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(feature_len))));
    }

    void validate(std::size_t feature_len) const {
        if (n_trees < 1) throw InvalidArgument("n_trees must be >= 1");
        if (min_node_size < 1) throw InvalidArgument("min_node_size must be >= 1");
        const std::size_t m = resolved_mtry(feature_len);
        if (m < 1 || m > feature_len) {
            throw InvalidArgument("mtry " + std::to_string(m) + " outside [1, " + std::to_string(feature_len) + "]");
        }
    }

    bool operator==(const ForestConfig&) const = default;
};

/// One node of a tree stored in preorder. Internal nodes send
/// x[feature] <= threshold to `left` (always the next node) and the rest to
/// `right`; leaves hold integer class counts.
struct TreeNode {
    static constexpr std::uint32_t kLeaf = 0xFFFF'FFFFu;

    std::uint32_t feature = kLeaf;
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::vector<std::uint32_t> class_counts;

    bool is_leaf() const noexcept { return feature == kLeaf; }

    /// Majority class of a leaf, ties to the lowest class index.
    std::size_t majority() const noexcept {
        return static_cast<std::size_t>(std::max_element(class_counts.begin(), class_counts.end()) -
                                        class_counts.begin());
    }

    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    std::size_t depth() const {
        std::size_t best = 0;
        std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (!nodes[i].is_leaf()) {
                stack.push_back({nodes[i].left, d + 1});
                stack.push_back({nodes[i].right, d + 1});
            }
        }
        return best;
    }

    bool operator==(const Tree&) const = default;
};

/// Column-major copy of a dataset's features plus labels; the layout the
/// split search scans.
class TrainingData {
public:
    TrainingData(std::size_t num_features, std::size_t num_classes)
        : num_features_(num_features), num_classes_(num_classes) {}

    explicit TrainingData(const Dataset& ds)
        : num_features_(ds.feature_len()),
          num_classes_(ds.num_classes()),
          num_samples_(ds.size()),
          columns_(ds.size() * ds.feature_len()),
          labels_(ds.size()) {
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto& s = ds[i];
            labels_[i] = static_cast<std::uint32_t>(s.label);
            for (std::size_t f = 0; f < num_features_; ++f) columns_[f * num_samples_ + i] = s.features[f];
        }
    }

    /// Builds from row-major features; mostly for tests.
    static TrainingData from_rows(const std::vector<std::vector<Byte>>& rows,
                                  const std::vector<std::size_t>& labels, std::size_t num_classes) {
        if (rows.size() != labels.size()) throw ShapeMismatch("row/label count mismatch");
        const std::size_t p = rows.empty() ? 0 : rows.front().size();
        TrainingData out(p, num_classes);
        out.num_samples_ = rows.size();
        out.columns_.resize(rows.size() * p);
        out.labels_.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != p) throw ShapeMismatch("ragged rows");
            if (labels[i] >= num_classes) throw InvalidArgument("label out of range");
            out.labels_[i] = static_cast<std::uint32_t>(labels[i]);
            for (std::size_t f = 0; f < p; ++f) out.columns_[f * rows.size() + i] = rows[i][f];
        }
        return out;
    }

    std::size_t num_samples() const noexcept { return num_samples_; }
    std::size_t num_features() const noexcept { return num_features_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    Byte value(std::size_t sample, std::size_t feature) const noexcept {
        return columns_[feature * num_samples_ + sample];
    }
    std::span<const Byte> column(std::size_t feature) const noexcept {
        return {columns_.data() + feature * num_samples_, num_samples_};
    }
    std::uint32_t label(std::size_t sample) const noexcept { return labels_[sample]; }

private:
    std::size_t num_features_ = 0;
    std::size_t num_classes_ = 0;
    std::size_t num_samples_ = 0;
    std::vector<Byte> columns_;
    std::vector<std::uint32_t> labels_;
};

inline double gini(std::span<const std::uint32_t> counts) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) throw InvalidArgument("gini of an empty node");
    double sum_sq = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

inline double gini(std::initializer_list<std::uint32_t> counts) {
    return gini(std::span<const std::uint32_t>(counts.begin(), counts.size()));
}

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;  // parent Gini minus size-weighted child Gini
};

namespace detail {

// A candidate partition scored by sum_left/n_left + sum_right/n_right, where
// the sums are sums of squared class counts. Maximizing the score minimizes
// weighted child Gini; comparisons are done in exact integer arithmetic so
// equal splits tie exactly and the lowest-index rule decides.
struct SplitScore {
    std::uint64_t sum_left = 0, n_left = 0, sum_right = 0, n_right = 0;

    unsigned __int128 numerator() const {
        return static_cast<unsigned __int128>(sum_left) * n_right +
               static_cast<unsigned __int128>(sum_right) * n_left;
    }
    unsigned __int128 denominator() const { return static_cast<unsigned __int128>(n_left) * n_right; }

    bool better_than(const SplitScore& o) const {
        // Values are < 2^64 * 2^32, products stay well inside 128 bits for
        // any realistic node size.
        return numerator() * o.denominator() > o.numerator() * denominator();
    }
    /// Strictly positive impurity decrease relative to a parent with
    /// sum_sq / n.
    bool improves(std::uint64_t parent_sum_sq, std::uint64_t n) const {
        return numerator() * n > static_cast<unsigned __int128>(parent_sum_sq) * denominator();
    }
    double gain(std::uint64_t parent_sum_sq, std::uint64_t n) const {
        const double nn = static_cast<double>(n);
        const double children = (static_cast<double>(sum_left) / static_cast<double>(n_left) +
                                 static_cast<double>(sum_right) / static_cast<double>(n_right)) / nn;
        return children - static_cast<double>(parent_sum_sq) / (nn * nn);
    }
};

/// Reusable per-thread buffers for the histogram split search.
struct SplitWorkspace {
    std::array<std::uint32_t, 256> bin_total{};
    std::vector<std::uint32_t> bin_class;  // 256 x num_classes
    std::vector<std::uint64_t> left;

    void reserve(std::size_t num_classes) {
        if (bin_class.size() != 256 * num_classes) bin_class.assign(256 * num_classes, 0);
        left.assign(num_classes, 0);
    }
};

}  // namespace detail

/// Best Gini split of `samples` over the features in `feature_subset`.
///
/// Candidate thresholds are midpoints between consecutive distinct values of
/// a feature; both children must hold at least `min_leaf` samples. Returns
/// nothing unless some split strictly decreases impurity. Ties go to the
/// lowest feature index, then the lowest threshold.
inline std::optional<Split> best_split(const TrainingData& data, std::span<const std::uint32_t> samples,
                                       std::span<const std::size_t> feature_subset, std::size_t min_leaf,
                                       detail::SplitWorkspace& ws) {
    const std::size_t k = data.num_classes();
    const std::uint64_t n = samples.size();
    if (n < 2 || feature_subset.empty()) return std::nullopt;
    ws.reserve(k);

    std::vector<std::uint64_t> parent(k, 0);
    for (auto s : samples) ++parent[data.label(s)];
    std::uint64_t parent_sum_sq = 0;
    for (auto c : parent) parent_sum_sq += c * c;
    if (parent_sum_sq == n * n) return std::nullopt;  // pure

    std::vector<std::size_t> features(feature_subset.begin(), feature_subset.end());
    std::sort(features.begin(), features.end());

    std::optional<Split> best;
    detail::SplitScore best_score;
    for (const std::size_t f : features) {
        const auto column = data.column(f);
        for (auto s : samples) {
            const Byte v = column[s];
            ++ws.bin_total[v];
            ++ws.bin_class[v * k + data.label(s)];
        }
        std::fill(ws.left.begin(), ws.left.end(), 0);
        detail::SplitScore score{0, 0, parent_sum_sq, n};
        int prev = -1;
        for (int v = 0; v < 256; ++v) {
            const std::uint32_t count = ws.bin_total[static_cast<std::size_t>(v)];
            if (count == 0) continue;
            if (prev >= 0 && score.n_left >= min_leaf && score.n_right >= min_leaf &&
                score.improves(parent_sum_sq, n) && (!best || score.better_than(best_score))) {
                best_score = score;
                best = Split{f, (prev + v) / 2.0, 0.0};
            }
            // Move bin v from right to left.
            const std::uint32_t* row = &ws.bin_class[static_cast<std::size_t>(v) * k];
            for (std::size_t c = 0; c < k; ++c) {
                const std::uint64_t m = row[c];
                if (m == 0) continue;
                const std::uint64_t l = ws.left[c];
                const std::uint64_t r = parent[c] - l;
                score.sum_left += 2 * l * m + m * m;
                score.sum_right -= 2 * r * m - m * m;
                ws.left[c] = l + m;
            }
            score.n_left += count;
            score.n_right -= count;
            prev = v;
        }
        for (int v = 0; v < 256; ++v) {
            if (ws.bin_total[static_cast<std::size_t>(v)] == 0) continue;
            ws.bin_total[static_cast<std::size_t>(v)] = 0;
            std::fill_n(ws.bin_class.begin() + static_cast<std::ptrdiff_t>(v) * static_cast<std::ptrdiff_t>(k), k, 0u);
        }
    }
    if (best) best->gain = best_score.gain(parent_sum_sq, n);
    return best;
}

inline std::optional<Split> best_split(const TrainingData& data, std::span<const std::uint32_t> samples,
                                       std::span<const std::size_t> feature_subset, std::size_t min_leaf = 1) {
    detail::SplitWorkspace ws;
    return best_split(data, samples, feature_subset, min_leaf, ws);
}

/// n indices drawn uniformly with replacement from [0, n).
inline std::vector<std::uint32_t> bootstrap_sample(std::size_t n, Rng& rng) {
    std::vector<std::uint32_t> out(n);
    for (auto& i : out) i = static_cast<std::uint32_t>(rng.below(n));
    return out;
}

namespace detail {

/// First m entries of a seeded partial Fisher-Yates shuffle of [0, p).
inline void sample_features(std::vector<std::size_t>& pool, std::size_t m, Rng& rng,
                            std::vector<std::size_t>& out) {
    const std::size_t p = pool.size();
    out.clear();
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = i + rng.below(p - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
}

}  // namespace detail

/// Grows one tree on `samples` (indices into data; duplicates allowed).
/// A node becomes a leaf when it is pure, holds fewer than
/// 2 * min_node_size samples, sits at max_depth, or no split over its
/// feature subset decreases impurity.
inline Tree grow_tree(const TrainingData& data, std::vector<std::uint32_t> samples, const ForestConfig& config,
                      Rng& rng) {
    if (samples.empty()) throw InvalidArgument("cannot grow a tree on 0 samples");
    const std::size_t p = data.num_features();
    const std::size_t k = data.num_classes();
    const std::size_t mtry = config.resolved_mtry(p);
    if (mtry < 1 || mtry > p) throw InvalidArgument("mtry outside [1, feature_len]");

    struct Task {
        std::size_t begin, end, depth;
        std::uint32_t parent;  // kLeaf for the root and for left children
    };
    Tree tree;
    std::vector<Task> stack{{0, samples.size(), 0, TreeNode::kLeaf}};
    std::vector<std::size_t> pool(p);
    for (std::size_t f = 0; f < p; ++f) pool[f] = f;
    std::vector<std::size_t> subset;
    detail::SplitWorkspace ws;

    while (!stack.empty()) {
        const Task task = stack.back();
        stack.pop_back();
        const auto index = static_cast<std::uint32_t>(tree.nodes.size());
        if (task.parent != TreeNode::kLeaf) tree.nodes[task.parent].right = index;
        tree.nodes.emplace_back();

        const std::span<const std::uint32_t> node_samples(samples.data() + task.begin, task.end - task.begin);
        std::vector<std::uint32_t> counts(k, 0);
        for (auto s : node_samples) ++counts[data.label(s)];
        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;

        std::optional<Split> split;
        if (!pure && node_samples.size() >= 2 * config.min_node_size &&
            (!config.max_depth || task.depth < *config.max_depth)) {
            detail::sample_features(pool, mtry, rng, subset);
            split = best_split(data, node_samples, subset, config.min_node_size, ws);
        }
        if (!split) {
            tree.nodes[index].class_counts = std::move(counts);
            continue;
        }
        auto& node = tree.nodes[index];
        node.feature = static_cast<std::uint32_t>(split->feature);
        node.threshold = split->threshold;
        node.left = index + 1;
        const auto column = data.column(split->feature);
        const double threshold = split->threshold;
        auto mid = std::stable_partition(samples.begin() + static_cast<std::ptrdiff_t>(task.begin),
                                         samples.begin() + static_cast<std::ptrdiff_t>(task.end),
                                         [&](std::uint32_t s) { return column[s] <= threshold; });
        const auto cut = static_cast<std::size_t>(mid - samples.begin());
        stack.push_back({cut, task.end, task.depth + 1, index});
        stack.push_back({task.begin, cut, task.depth + 1, TreeNode::kLeaf});
    }
    return tree;
}

inline std::size_t predict_tree(const Tree& tree, std::span<const Byte> features, std::size_t feature_len) {
    if (features.size() != feature_len) {
        throw ShapeMismatch("feature vector has length " + std::to_string(features.size()) + ", model expects " +
                            std::to_string(feature_len));
    }
    std::uint32_t i = 0;
    while (!tree.nodes[i].is_leaf()) {
        const auto& node = tree.nodes[i];
        i = features[node.feature] <= node.threshold ? node.left : node.right;
    }
    return tree.nodes[i].majority();
}

struct ForestModel {
    std::vector<Tree> trees;
    ForestConfig config;  // mtry always resolved
    std::vector<std::string> label_names;
    std::size_t feature_len = 0;
    // Per tree, how many times each training sample was drawn. Kept in memory
    // only (not serialized); empty for loaded models.
    std::vector<std::vector<std::uint16_t>> in_bag;

    std::size_t num_classes() const noexcept { return label_names.size(); }

    void check_length(std::span<const Byte> features) const {
        if (features.size() != feature_len) {
            throw ShapeMismatch("feature vector has length " + std::to_string(features.size()) +
                                ", model expects " + std::to_string(feature_len));
        }
    }

    std::vector<std::uint32_t> votes(std::span<const Byte> features) const {
        check_length(features);
        std::vector<std::uint32_t> v(num_classes(), 0);
        for (const auto& t : trees) ++v[predict_tree(t, features, feature_len)];
        return v;
    }

    /// Vote fractions per class; sums to 1.
    std::vector<double> predict_proba(std::span<const Byte> features) const {
        const auto v = votes(features);
        std::vector<double> p(v.size());
        for (std::size_t c = 0; c < v.size(); ++c) {
            p[c] = static_cast<double>(v[c]) / static_cast<double>(trees.size());
        }
        return p;
    }

    /// Majority vote, ties to the lowest class index.
    std::size_t predict(std::span<const Byte> features) const {
        const auto v = votes(features);
        return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    }
};

/// Trains config.n_trees trees; tree t uses only stream (seed, t).
inline ForestModel train_forest(const Dataset& train, const ForestConfig& config,
                                unsigned threads = default_threads()) {
    if (train.empty()) throw InvalidArgument("cannot train on an empty dataset");
    config.validate(train.feature_len());
    if (train.size() > 0xFFFF'FFFFu) throw InvalidArgument("too many samples");

    ForestModel model;
    model.config = config;
    model.config.mtry = config.resolved_mtry(train.feature_len());
    model.label_names = train.label_names();
    model.feature_len = train.feature_len();
    model.trees.resize(config.n_trees);
    if (config.bootstrap) model.in_bag.resize(config.n_trees);

    const TrainingData data(train);
    const Rng base(config.seed, streams::trees);
    parallel_for(config.n_trees, threads, [&](std::size_t t) {
        Rng rng = base.split(t);
        std::vector<std::uint32_t> samples;
        if (config.bootstrap) {
            samples = bootstrap_sample(train.size(), rng);
            auto& bag = model.in_bag[t];
            bag.assign(train.size(), 0);
            for (auto s : samples) {
                if (bag[s] < 0xFFFF) ++bag[s];
            }
        } else {
            samples.resize(train.size());
            for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = static_cast<std::uint32_t>(i);
        }
        model.trees[t] = grow_tree(data, std::move(samples), model.config, rng);
    });
    return model;
}

/// Accuracy of each training sample's vote among the trees that did not see
/// it. Samples that were in every bag are left out of the denominator.
inline double oob_accuracy(const ForestModel& model, const Dataset& train) {
    if (!model.config.bootstrap) throw NotApplicable("out-of-bag accuracy needs bootstrap training");
    if (model.in_bag.size() != model.trees.size()) {
        throw NotApplicable("model carries no in-bag record (loaded from disk?)");
    }
    const Dataset ds = train.with_vocabulary(model.label_names);
    std::size_t correct = 0, counted = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<std::uint32_t> v(model.num_classes(), 0);
        bool any = false;
        for (std::size_t t = 0; t < model.trees.size(); ++t) {
            if (model.in_bag[t].size() != ds.size()) throw ShapeMismatch("in-bag record does not match dataset size");
            if (model.in_bag[t][i] != 0) continue;
            ++v[predict_tree(model.trees[t], ds[i].features, model.feature_len)];
            any = true;
        }
        if (!any) continue;
        ++counted;
        const auto pred = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
        if (pred == ds[i].label) ++correct;
    }
    if (counted == 0) throw NotApplicable("no sample was ever out of bag");
    return static_cast<double>(correct) / static_cast<double>(counted);
}

// ---------------------------------------------------------------------------
// Model file.
//
//   "BSRF" magic, u32 version (1)
//   config: u32 n_trees, u32 mtry, u32 min_node_size, u8 has_max_depth,
//           u32 max_depth, u8 bootstrap, u64 seed
//   u32 feature_len, u32 label count, per label: u32 byte length + UTF-8
//   u32 tree count, then per tree a preorder node stream:
//     u8 0 (leaf)     + label-count x u32 class counts
//     u8 1 (internal) + u32 feature + u64 IEEE-754 bits of the threshold
// All integers little-endian.

inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void bytes(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view in) : in_(in) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
        return v;
    }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const noexcept { return pos_ == in_.size(); }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw ModelFormatError("model stream truncated at byte " + std::to_string(pos_));
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xFFFF'FFFFu) throw InvalidArgument(std::string(what) + " does not fit the model format");
    return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline std::string save_model(const ForestModel& model) {
    detail::ByteWriter w;
    w.bytes("BSRF");
    w.u32(kModelVersion);
    const auto& c = model.config;
    w.u32(detail::checked_u32(c.n_trees, "n_trees"));
    w.u32(detail::checked_u32(c.resolved_mtry(model.feature_len), "mtry"));
    w.u32(detail::checked_u32(c.min_node_size, "min_node_size"));
    w.u8(c.max_depth ? 1 : 0);
    w.u32(c.max_depth ? detail::checked_u32(*c.max_depth, "max_depth") : 0);
    w.u8(c.bootstrap ? 1 : 0);
    w.u64(c.seed);
    w.u32(detail::checked_u32(model.feature_len, "feature_len"));
    w.u32(detail::checked_u32(model.label_names.size(), "label count"));
    for (const auto& name : model.label_names) {
        w.u32(detail::checked_u32(name.size(), "label length"));
        w.bytes(name);
    }
    w.u32(detail::checked_u32(model.trees.size(), "tree count"));
    for (const auto& tree : model.trees) {
        for (const auto& node : tree.nodes) {
            if (node.is_leaf()) {
                w.u8(0);
                for (auto count : node.class_counts) w.u32(count);
            } else {
                w.u8(1);
                w.u32(node.feature);
                w.u64(std::bit_cast<std::uint64_t>(node.threshold));
            }
        }
    }
    return w.take();
}

inline ForestModel load_model(std::string_view stream) {
    detail::ByteReader r(stream);
    if (r.bytes(4) != "BSRF") throw ModelFormatError("not a model file (bad magic)");
    if (const auto version = r.u32(); version != kModelVersion) {
        throw ModelFormatError("unsupported model format version " + std::to_string(version));
    }
    ForestModel model;
    auto& c = model.config;
    c.n_trees = r.u32();
    c.mtry = r.u32();
    c.min_node_size = r.u32();
    const bool has_depth = r.u8() != 0;
    const std::uint32_t depth = r.u32();
    if (has_depth) c.max_depth = depth;
    c.bootstrap = r.u8() != 0;
    c.seed = r.u64();
    model.feature_len = r.u32();
    const std::uint32_t n_labels = r.u32();
    if (n_labels == 0) throw ModelFormatError("model has no labels");
    // Each label costs at least 4 bytes; guards absurd counts in corrupt files.
    if (n_labels > r.remaining() / 4) throw ModelFormatError("model stream truncated in label table");
    for (std::uint32_t i = 0; i < n_labels; ++i) model.label_names.emplace_back(r.bytes(r.u32()));
    const std::uint32_t n_trees = r.u32();
    if (n_trees != c.n_trees) throw ModelFormatError("tree count disagrees with config");
    if (n_trees > r.remaining()) throw ModelFormatError("model stream truncated in tree table");
    model.trees.resize(n_trees);
    for (auto& tree : model.trees) {
        std::vector<std::uint32_t> awaiting_right;
        bool prev_internal = false;
        while (true) {
            const auto index = static_cast<std::uint32_t>(tree.nodes.size());
            if (index > 0 && !prev_internal) {
                tree.nodes[awaiting_right.back()].right = index;
                awaiting_right.pop_back();
            }
            TreeNode node;
            const std::uint8_t tag = r.u8();
            if (tag == 0) {
                node.class_counts.resize(n_labels);
                for (auto& count : node.class_counts) count = r.u32();
                tree.nodes.push_back(std::move(node));
                prev_internal = false;
                if (awaiting_right.empty()) break;
            } else if (tag == 1) {
                node.feature = r.u32();
                if (node.feature >= model.feature_len) throw ModelFormatError("split feature out of range");
                node.threshold = std::bit_cast<double>(r.u64());
                node.left = index + 1;
                tree.nodes.push_back(std::move(node));
                awaiting_right.push_back(index);
                prev_internal = true;
            } else {
                throw ModelFormatError("bad node tag " + std::to_string(tag));
            }
        }
    }
    if (!r.done()) throw ModelFormatError("trailing bytes after last tree");
    return model;
}

}  // namespace binsight
