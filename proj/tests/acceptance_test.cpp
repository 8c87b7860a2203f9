// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
// The conditional real-corpus check runs only when BINSIGHT_MALIMG_CSV names
// a CSV produced by `binsight featurize` over the Malimg family directories;
// otherwise it prints SKIP and does not affect the exit status.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "binsight/binsight.hpp"
#include "oracles.hpp"

using namespace binsight;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

std::string fmt(double v, int digits = 4) { return detail::fixed(v, digits); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Dataset random_dataset(Rng& rng, std::size_t classes, std::size_t max_per_class, std::size_t p) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
    Dataset ds(names, p);
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < classes; ++c) labels.insert(labels.end(), 2 + rng.below(max_per_class - 1), c);
    rng.shuffle(labels);
    for (auto y : labels) {
        FeatureVector f(p);
        for (auto& x : f) x = static_cast<Byte>(rng.below(256));
        ds.add({f, y, ""});
    }
    return ds;
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
    Outcome o;
    const auto cm = ConfusionMatrix::from_counts({{40, 10}, {20, 30}});
    o.require(kappa(cm) == 0.4, "kappa([[40,10],[20,30]]) = " + fmt(kappa(cm), 17));
    o.require(accuracy(cm) == 0.7, "accuracy([[40,10],[20,30]]) = " + fmt(accuracy(cm), 17));

    Rng rng(605);
    std::size_t checked = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t k = 2 + rng.below(8);
        std::vector<std::vector<std::uint64_t>> g(k, std::vector<std::uint64_t>(k, 0));
        const bool make_diagonal = t % 10 == 0;
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < k; ++c) {
                if (r == c) g[r][c] = 1 + rng.below(80);
                else if (!make_diagonal && rng.below(3) != 0) g[r][c] = rng.below(40);
            }
        }
        const auto m = ConfusionMatrix::from_counts(g);
        const double n = static_cast<double>(m.total());
        bool diagonal = true;
        double po = 0, pe = 0, weighted = 0;
        for (std::size_t c = 0; c < k; ++c) {
            po += static_cast<double>(m.at(c, c)) / n;
            pe += static_cast<double>(m.row_total(c)) * static_cast<double>(m.col_total(c)) / (n * n);
            for (std::size_t j = 0; j < k; ++j) diagonal &= c == j || m.at(c, j) == 0;
            weighted += *per_class_recall(m)[c] * static_cast<double>(m.row_total(c));
        }
        const double kap = kappa(m);
        o.require(std::abs(kap - (po - pe) / (1 - pe)) <= 1e-9, "kappa disagrees with p_o/p_e formula");
        o.require(diagonal == (std::abs(kap - 1.0) <= 1e-9), "kappa = 1 iff diagonal violated");
        o.require(std::abs(weighted / n - accuracy(m)) <= 1e-9, "recall-weighting identity violated");

        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        ConfusionMatrix p(m.label_names());
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < k; ++c) p.at(perm[r], perm[c]) = m.at(r, c);
        }
        o.require(std::abs(kappa(p) - kap) <= 1e-9 && std::abs(accuracy(p) - accuracy(m)) <= 1e-9,
                  "permutation invariance violated");
        ++checked;
    }
    if (o.pass) o.detail = "worked example exact; " + std::to_string(checked) + " random matrices within 1e-9";
    return o;
}

Outcome clopper_pearson() {
    Outcome o;
    Rng rng(606);
    double worst = 0;
    for (int t = 0; t < 200; ++t) {
        const std::uint64_t n = 1 + rng.below(500);
        std::uint64_t c = rng.below(n + 1);
        if (t % 20 == 0) c = 0;
        if (t % 20 == 1) c = n;
        const auto got = accuracy_ci(c, n);
        const auto ref = oracle::clopper_pearson(static_cast<long long>(c), static_cast<long long>(n));
        worst = std::max({worst, std::abs(got.lower - ref.lower), std::abs(got.upper - ref.upper)});
        if (c == 0) o.require(got.lower == 0.0, "(0, n) lower is not exactly 0");
        if (c == n) o.require(got.upper == 1.0, "(n, n) upper is not exactly 1");
    }
    o.require(worst <= 1e-6, "max deviation from oracle " + std::to_string(worst));

    Rng sim(6060);
    int covered = 0;
    for (int t = 0; t < 2000; ++t) {
        std::uint64_t x = 0;
        for (int i = 0; i < 100; ++i) x += sim.uniform() < 0.5;
        const auto ci = accuracy_ci(x, 100);
        covered += ci.lower <= 0.5 && 0.5 <= ci.upper;
    }
    const double coverage = covered / 2000.0;
    o.require(coverage >= 0.93, "coverage " + fmt(coverage));
    if (o.pass) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "200-case grid max |diff| %.2e; boundaries exact; coverage %.4f", worst,
                      coverage);
        o.detail = buf;
    }
    return o;
}

Outcome tree_oracle() {
    Outcome o;
    Rng rng(607);
    const int datasets = 200;
    std::size_t points = 0;
    for (int trial = 0; trial < datasets && o.pass; ++trial) {
        const std::size_t n = 1 + rng.below(10);
        const std::size_t p = 1 + rng.below(3);
        const std::size_t k = 1 + rng.below(3);
        const std::size_t levels = 2 + rng.below(5);
        std::vector<std::vector<Byte>> rows(n, std::vector<Byte>(p));
        std::vector<std::vector<int>> irows(n, std::vector<int>(p));
        std::vector<std::size_t> labels(n);
        std::vector<int> ilabels(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t f = 0; f < p; ++f) {
                rows[i][f] = static_cast<Byte>(rng.below(levels) * 17);
                irows[i][f] = rows[i][f];
            }
            labels[i] = rng.below(k);
            ilabels[i] = static_cast<int>(labels[i]);
        }
        ForestConfig cfg;
        cfg.mtry = p;
        cfg.bootstrap = false;
        std::vector<std::uint32_t> all(n);
        std::iota(all.begin(), all.end(), 0u);
        Rng tree_rng(trial);
        const auto tree = grow_tree(TrainingData::from_rows(rows, labels, k), all, cfg, tree_rng);
        const auto ref = oracle::grow(irows, ilabels, static_cast<int>(k));

        // Grid: every level value plus the gaps between them.
        const std::size_t side = levels * 2;
        std::size_t total = 1;
        for (std::size_t f = 0; f < p; ++f) total *= side;
        std::vector<Byte> x(p);
        std::vector<int> xi(p);
        for (std::size_t code = 0; code < total; ++code) {
            std::size_t c = code;
            for (std::size_t f = 0; f < p; ++f, c /= side) {
                x[f] = static_cast<Byte>((c % side) * 17 / 2);
                xi[f] = x[f];
            }
            ++points;
            if (predict_tree(tree, x, p) != static_cast<std::size_t>(ref->predict(xi))) {
                o.require(false, "dataset " + std::to_string(trial) + " disagrees with the oracle");
                break;
            }
        }
    }
    if (o.pass) o.detail = std::to_string(datasets) + " datasets, " + std::to_string(points) + " grid points agree";
    return o;
}

SynthSpec bundled_spec() {
    return parse_synth_spec(read_file(std::string(BINSIGHT_SOURCE_DIR) + "/data/synth_5family.spec"));
}

Dataset featurize_corpus(const std::vector<SynthSample>& corpus, const std::vector<std::string>& families,
                         unsigned threads) {
    std::vector<std::string> names = families;
    std::sort(names.begin(), names.end());
    std::vector<FeatureVector> rows(corpus.size());
    parallel_for(corpus.size(), threads,
                 [&](std::size_t i) { rows[i] = featurize(RawBinary{corpus[i].bytes, corpus[i].filename}); });
    Dataset ds(names, FeatureConfig{}.feature_len());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        ds.add({std::move(rows[i]), *ds.label_index(corpus[i].family), corpus[i].filename});
    }
    return ds;
}

Outcome determinism() {
    Outcome o;
    SynthSpec spec;
    spec.families.push_back({"A", {}, 128, 30, 0.1, 2000, 6000});
    spec.families.push_back({"B", {}, 128, 30, 0.1, 2000, 6000});
    spec.families.push_back({"C", {}, 128, 30, 0.1, 2000, 6000});
    const std::vector<std::string> names{"A", "B", "C"};
    const auto corpus = synth_families(spec, 608);
    const auto csv1 = write_csv(featurize_corpus(corpus, names, 1));
    const auto csv2 = write_csv(featurize_corpus(synth_families(spec, 608), names, 8));
    o.require(csv1 == csv2, "featurize CSV differs between runs");

    const auto ds = load_csv(csv1);
    ForestConfig cfg;
    cfg.n_trees = 60;
    cfg.seed = 608;
    const auto m1 = save_model(train_forest(ds, cfg, 1));
    const auto m2 = save_model(train_forest(ds, cfg, 1));
    const auto m8 = save_model(train_forest(ds, cfg, 8));
    o.require(m1 == m2, "same seed produced different model bytes");
    o.require(m1 == m8, "1 vs 8 threads produced different model bytes");
    if (o.pass) {
        o.detail = "model " + std::to_string(m1.size()) + " bytes identical x3 (threads 1,1,8); CSV " +
                   std::to_string(csv1.size()) + " bytes identical";
    }
    return o;
}

Outcome split_fold_contracts() {
    Outcome o;
    Rng rng(609);
    for (int t = 0; t < 50 && o.pass; ++t) {
        const auto ds = random_dataset(rng, 1 + rng.below(5), 40, 3);
        const double f = 0.1 + 0.8 * rng.uniform();
        const auto s = stratified_split(ds, f, rng.next());
        const auto counts = ds.class_counts();
        for (std::size_t c = 0; c < counts.size(); ++c) {
            std::size_t got = 0;
            for (auto i : s.train_indices) got += ds[i].label == c;
            const double target = std::round(f * static_cast<double>(counts[c]));
            o.require(std::abs(static_cast<double>(got) - target) <= 1.0, "split count off by more than 1");
        }
        std::vector<std::size_t> all = s.train_indices;
        all.insert(all.end(), s.test_indices.begin(), s.test_indices.end());
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expect(ds.size());
        std::iota(expect.begin(), expect.end(), 0);
        o.require(all == expect, "split is not a disjoint cover");

        const std::size_t k = 2 + rng.below(9);
        const auto folds = stratified_folds(ds, k, rng.next());
        std::size_t covered = 0;
        for (std::size_t fold = 0; fold < k; ++fold) covered += folds.members(fold).size();
        o.require(covered == ds.size(), "folds are not a partition");
        for (std::size_t c = 0; c < counts.size(); ++c) {
            std::vector<std::size_t> per(k, 0);
            for (std::size_t i = 0; i < ds.size(); ++i) per[folds.fold_of[i]] += ds[i].label == c;
            const auto [lo, hi] = std::minmax_element(per.begin(), per.end());
            o.require(*hi - *lo <= 1, "per-class fold spread exceeds 1");
        }
    }
    const auto ds = random_dataset(rng, 3, 20, 4);
    ForestConfig cfg;
    cfg.n_trees = 10;
    const auto cv = cross_validate(ds, 5, cfg, 609, 1);
    o.require(cv.pooled_confusion.total() == ds.size(), "CV pooled total != n");
    if (o.pass) {
        o.detail = "50 datasets: split within 1 and disjoint cover, folds partition with spread <= 1; CV pooled "
                   "total " + std::to_string(cv.pooled_confusion.total()) + " = n";
    }
    return o;
}

struct EndToEnd {
    Outcome outcome;
    double accuracy = 0;
};

EndToEnd end_to_end() {
    EndToEnd e;
    Outcome& o = e.outcome;
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = 42;
    const auto spec = bundled_spec();
    std::vector<std::string> families;
    std::size_t total = 0;
    for (const auto& f : spec.families) {
        families.push_back(f.name);
        total += f.sample_count;
    }
    o.require(spec.families.size() == 5 && total == 1000 && spec.twins.size() == 1,
              "bundled spec is not 5 families x 200 with one twin pair");
    if (!o.pass) return e;

    const auto ds = featurize_corpus(synth_families(spec, seed), families, default_threads());
    const auto split = stratified_split(ds, 0.8, seed);
    ForestConfig cfg;
    cfg.n_trees = 100;
    cfg.seed = seed;
    const auto model = train_forest(split.train, cfg);
    const auto report = evaluate(model, split.test);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    e.accuracy = report.accuracy;

    const auto& names = report.confusion.label_names();
    const auto twin_a = *ds.label_index(spec.twins[0].base);
    const auto twin_b = *ds.label_index(spec.twins[0].derived);
    double max_twin = 0, min_other = 1;
    for (std::size_t c = 0; c < names.size(); ++c) {
        const double r = report.per_class_recall[c].value_or(0.0);
        if (c == twin_a || c == twin_b) max_twin = std::max(max_twin, r);
        else min_other = std::min(min_other, r);
    }
    const auto errors = report.confusion.total() - report.confusion.trace();
    const auto twin_errors = report.confusion.at(twin_a, twin_b) + report.confusion.at(twin_b, twin_a);
    const double twin_share = errors ? static_cast<double>(twin_errors) / static_cast<double>(errors) : 1.0;

    o.require(report.accuracy >= 0.90, "accuracy " + fmt(report.accuracy));
    o.require(max_twin < min_other, "twin recalls are not the two lowest (twin max " + fmt(max_twin) +
                                        ", others min " + fmt(min_other) + ")");
    o.require(twin_share >= 0.80, "twin share of errors " + fmt(twin_share));
    o.require(seconds < 120.0, "runtime " + fmt(seconds, 1) + " s");
    std::string detail = "accuracy " + fmt(report.accuracy) + ", kappa " + fmt(report.kappa.value_or(NAN)) +
                         "; recalls";
    for (std::size_t c = 0; c < names.size(); ++c) {
        detail += " " + names[c] + "=" + fmt(report.per_class_recall[c].value_or(NAN), 3);
    }
    detail += "; twin errors " + std::to_string(twin_errors) + "/" + std::to_string(errors) + "; " +
              fmt(seconds, 1) + " s";
    if (o.pass) o.detail = detail;
    else o.detail += " [" + detail + "]";
    return e;
}

Outcome featurizer_contracts() {
    Outcome o;
    Rng rng(611);
    RawBinary kb{std::vector<Byte>(1024), "kb.bin"};
    for (auto& b : kb.bytes) b = static_cast<Byte>(rng.below(256));
    FeatureConfig cfg;
    cfg.width_rule = WidthRule::fixed(32);
    o.require(featurize(kb, cfg) == kb.bytes, "1024-byte file at width 32 is not its own feature vector");

    const auto img = bytes_to_image(std::vector<Byte>{10, 20, 30, 40, 50, 60, 70}, 4);
    o.require(img.width == 4 && img.height == 2 &&
                  img.pixels == std::vector<Byte>{10, 20, 30, 40, 50, 60, 70, 0},
              "7-byte width-4 padding example");

    for (int t = 0; t < 100; ++t) {
        const std::size_t w = 1 + rng.below(64), h = 1 + rng.below(64);
        std::vector<Byte> px(w * h);
        for (auto& p : px) p = static_cast<Byte>(rng.below(256));
        const GrayImage g(w, h, px);
        o.require(parse_pgm(export_pgm(g)) == g, "PGM round trip lost data");
    }
    if (o.pass) o.detail = "identity at width 32, padding example exact, 100 PGM round trips lossless";
    return o;
}

// Optional real-corpus reproduction; see README.
std::optional<Outcome> malimg() {
    const char* path = std::getenv("BINSIGHT_MALIMG_CSV");
    if (!path || !*path) return std::nullopt;
    Outcome o;
    const auto ds = load_csv(read_file(path));
    const std::uint64_t seed = 1;
    const auto split = stratified_split(ds, 0.8, seed);
    ForestConfig cfg;
    cfg.seed = seed;
    const auto report = evaluate(train_forest(split.train, cfg), split.test);
    const auto cv = cross_validate(split.train, 10, cfg, seed);
    o.require(std::abs(report.accuracy - 0.9526) <= 0.02, "test accuracy " + fmt(report.accuracy));
    o.require(report.kappa && std::abs(*report.kappa - 0.9441) <= 0.02, "test kappa off target");
    o.require(std::abs(cv.pooled_report.accuracy - 0.9464) <= 0.02,
              "CV pooled accuracy " + fmt(cv.pooled_report.accuracy));
    const std::vector<std::string> group{"C2LOP.gen!g", "C2LOP.P", "Swizzor.gen!E", "Swizzor.gen!I"};
    std::vector<std::size_t> idx;
    for (const auto& g : group) {
        const auto i = ds.label_index(g);
        o.require(i.has_value(), "family " + g + " missing");
        if (i) idx.push_back(*i);
    }
    if (o.pass) {
        std::uint64_t inside = 0, outside = 0;
        for (auto a : idx) {
            o.require(report.per_class_recall[a].value_or(0.0) < 0.6, "recall of " + ds.label_names()[a] + " >= 0.6");
            for (std::size_t c = 0; c < ds.num_classes(); ++c) {
                if (c == a) continue;
                const auto v = report.confusion.at(a, c);
                (std::find(idx.begin(), idx.end(), c) != idx.end() ? inside : outside) += v;
            }
        }
        o.require(inside > outside, "misclassifications of the group are not concentrated within it");
    }
    if (o.pass) {
        o.detail = "test accuracy " + fmt(report.accuracy) + ", kappa " + fmt(*report.kappa) + ", CV pooled " +
                   fmt(cv.pooled_report.accuracy);
    }
    return o;
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](const std::string& name, const Outcome& o) {
        std::printf("%s  %-28s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    };
    auto guarded = [&](const std::string& name, const std::function<Outcome()>& fn) {
        try {
            report(name, fn());
        } catch (const std::exception& e) {
            report(name, Outcome{false, std::string("exception: ") + e.what()});
        }
    };

    guarded("metric-oracles", metric_oracles);
    guarded("clopper-pearson", clopper_pearson);
    guarded("tree-oracle-equivalence", tree_oracle);
    guarded("determinism", determinism);
    guarded("split-fold-contracts", split_fold_contracts);

    double e2e_accuracy = -1;
    guarded("synthetic-end-to-end", [&] {
        auto e = end_to_end();
        e2e_accuracy = e.accuracy;
        return e.outcome;
    });
    guarded("synthetic-eval-accuracy", [&] {
        Outcome o;
        o.require(e2e_accuracy >= 0.95, "accuracy " + fmt(e2e_accuracy));
        if (o.pass) o.detail = "held-out accuracy " + fmt(e2e_accuracy) + " >= 0.95";
        return o;
    });
    guarded("featurizer-contracts", featurizer_contracts);

    try {
        if (auto m = malimg()) {
            report("malimg-reproduction", *m);
        } else {
            std::printf("SKIP  %-28s %s\n", "malimg-reproduction",
                        "conditional; set BINSIGHT_MALIMG_CSV to a featurized corpus CSV to run");
        }
    } catch (const std::exception& e) {
        report("malimg-reproduction", Outcome{false, std::string("exception: ") + e.what()});
    }

    std::printf("%s: %d failing criteria\n", failures ? "FAILED" : "OK", failures);
    return failures ? 1 : 0;
}
