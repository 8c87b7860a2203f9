#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "binsight/error.hpp"
#include "binsight/featurize.hpp"
#include "binsight/rng.hpp"

namespace binsight {

// Stream tags keep the randomized steps on disjoint generator streams even
// when the user passes the same seed to every command.
namespace streams {
inline constexpr std::uint64_t split = 0x5350'4C49'5400'0000ULL;
inline constexpr std::uint64_t folds = 0x464F'4C44'5300'0000ULL;
inline constexpr std::uint64_t synth = 0x5359'4E54'4800'0000ULL;
inline constexpr std::uint64_t trees = 0x5452'4545'5300'0000ULL;
inline constexpr std::uint64_t cv = 0x4356'0000'0000'0000ULL;
}  // namespace streams

struct LabeledSample {
    FeatureVector features;
    std::size_t label = 0;
    std::string source_name;
};

/// Feature vectors with class indices into a named label vocabulary.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<std::string> label_names, std::size_t feature_len)
        : label_names_(std::move(label_names)), feature_len_(feature_len) {
        std::set<std::string_view> seen;
        for (const auto& name : label_names_) {
            if (!seen.insert(name).second) throw InvalidArgument("duplicate label '" + name + "'");
        }
    }

    void add(LabeledSample sample) {
        if (sample.features.size() != feature_len_) {
            throw ShapeMismatch("sample has " + std::to_string(sample.features.size()) +
                                " features, dataset expects " + std::to_string(feature_len_));
        }
        if (sample.label >= label_names_.size()) {
            throw InvalidArgument("label index " + std::to_string(sample.label) + " out of range");
        }
        samples_.push_back(std::move(sample));
    }

    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    std::size_t feature_len() const noexcept { return feature_len_; }
    std::size_t num_classes() const noexcept { return label_names_.size(); }
    const std::vector<std::string>& label_names() const noexcept { return label_names_; }
    const std::vector<LabeledSample>& samples() const noexcept { return samples_; }
    const LabeledSample& operator[](std::size_t i) const { return samples_[i]; }

    std::optional<std::size_t> label_index(std::string_view name) const {
        auto it = std::find(label_names_.begin(), label_names_.end(), name);
        if (it == label_names_.end()) return std::nullopt;
        return static_cast<std::size_t>(it - label_names_.begin());
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(label_names_.size(), 0);
        for (const auto& s : samples_) ++counts[s.label];
        return counts;
    }

    /// Sample indices grouped by class, each group in ascending order.
    std::vector<std::vector<std::size_t>> indices_by_class() const {
        std::vector<std::vector<std::size_t>> groups(label_names_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) groups[samples_[i].label].push_back(i);
        return groups;
    }

    /// Same samples and vocabulary, restricted to `indices` (in that order).
    Dataset subset(std::span<const std::size_t> indices) const {
        Dataset out(label_names_, feature_len_);
        out.samples_.reserve(indices.size());
        for (auto i : indices) out.samples_.push_back(samples_.at(i));
        return out;
    }

    /// Re-indexes labels against another vocabulary (matched by name).
    Dataset with_vocabulary(const std::vector<std::string>& names) const {
        Dataset out(names, feature_len_);
        std::vector<std::size_t> map(label_names_.size());
        for (std::size_t c = 0; c < label_names_.size(); ++c) {
            auto idx = out.label_index(label_names_[c]);
            if (!idx) throw InvalidArgument("label '" + label_names_[c] + "' is not in the target vocabulary");
            map[c] = *idx;
        }
        out.samples_ = samples_;
        for (auto& s : out.samples_) s.label = map[s.label];
        return out;
    }

    /// Equal vocabularies, feature lengths, and (features, label) sequences.
    /// Source names are not part of the CSV interchange and are ignored.
    friend bool operator==(const Dataset& a, const Dataset& b) {
        if (a.label_names_ != b.label_names_ || a.feature_len_ != b.feature_len_ ||
            a.samples_.size() != b.samples_.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.samples_.size(); ++i) {
            if (a.samples_[i].label != b.samples_[i].label ||
                a.samples_[i].features != b.samples_[i].features) {
                return false;
            }
        }
        return true;
    }

private:
    std::vector<std::string> label_names_;
    std::size_t feature_len_ = 0;
    std::vector<LabeledSample> samples_;
};

// ---------------------------------------------------------------------------
// CSV interchange: header f0,...,f{n-1},label; one row per sample with the
// label written as the family name.

inline std::string write_csv(const Dataset& ds) {
    for (const auto& name : ds.label_names()) {
        if (name.find_first_of(",\n\r") != std::string::npos) {
            throw InvalidArgument("label '" + name + "' contains a comma or newline");
        }
    }
    std::string out;
    out.reserve((ds.size() + 1) * (ds.feature_len() * 4 + 16));
    for (std::size_t f = 0; f < ds.feature_len(); ++f) {
        out += 'f';
        out += std::to_string(f);
        out += ',';
    }
    out += "label\n";
    char buf[4];
    for (const auto& s : ds.samples()) {
        for (Byte v : s.features) {
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<unsigned>(v));
            out.append(buf, end);
            out += ',';
        }
        out += ds.label_names()[s.label];
        out += '\n';
    }
    return out;
}

/// Parses write_csv output. The label vocabulary of the result is the sorted
/// set of names found in the file. Errors report the 1-based line number.
inline Dataset load_csv(std::string_view text) {
    std::size_t pos = 0;
    std::size_t lineno = 0;
    auto next_line = [&](std::string_view& line) {
        if (pos >= text.size()) return false;
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = nl + 1;
        ++lineno;
        return true;
    };

    std::string_view header;
    if (!next_line(header)) throw ParseError(1, "missing header");
    std::size_t feature_len = 0;
    {
        std::size_t start = 0;
        while (true) {
            auto comma = header.find(',', start);
            auto cell = header.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                            : comma - start);
            if (comma == std::string_view::npos) {
                if (cell != "label") throw ParseError(1, "last header column must be 'label'");
                break;
            }
            if (cell != "f" + std::to_string(feature_len)) {
                throw ParseError(1, "unexpected header column '" + std::string(cell) + "'");
            }
            ++feature_len;
            start = comma + 1;
        }
        if (feature_len == 0) throw ParseError(1, "header declares no feature columns");
    }

    struct Row {
        FeatureVector features;
        std::string label;
    };
    std::vector<Row> rows;
    std::string_view line;
    while (next_line(line)) {
        if (line.empty()) {
            if (pos >= text.size()) break;
            throw ParseError(lineno, "empty row");
        }
        Row row;
        row.features.reserve(feature_len);
        std::size_t start = 0;
        for (std::size_t f = 0; f < feature_len; ++f) {
            auto comma = line.find(',', start);
            if (comma == std::string_view::npos) {
                throw ParseError(lineno, "row has " + std::to_string(f) + " feature cells, header declares " +
                                             std::to_string(feature_len));
            }
            unsigned v = 0;
            const char* first = line.data() + start;
            const char* last = line.data() + comma;
            auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc{} || ptr != last || first == last) {
                throw ParseError(lineno, "feature " + std::to_string(f) + " is not an integer: '" +
                                             std::string(first, last) + "'");
            }
            if (v > 255) throw ParseError(lineno, "feature " + std::to_string(f) + " outside [0,255]");
            row.features.push_back(static_cast<Byte>(v));
            start = comma + 1;
        }
        auto label = line.substr(start);
        if (label.find(',') != std::string_view::npos) {
            throw ParseError(lineno, "row has more cells than the header");
        }
        if (label.empty()) throw ParseError(lineno, "empty label");
        row.label = std::string(label);
        rows.push_back(std::move(row));
    }

    std::set<std::string> names;
    for (const auto& r : rows) names.insert(r.label);
    Dataset ds(std::vector<std::string>(names.begin(), names.end()), feature_len);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto label = static_cast<std::size_t>(std::distance(names.begin(), names.find(rows[i].label)));
        ds.add({std::move(rows[i].features), label, "row" + std::to_string(i + 2)});
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Stratified splitting and fold assignment.

struct SplitResult {
    Dataset train;
    Dataset test;
    std::vector<std::size_t> train_indices;  // into the input, ascending
    std::vector<std::size_t> test_indices;
};

/// Number of training samples a class of n_c receives: round-half-up of
/// fraction * n_c, clamped to [1, n_c - 1].
inline std::size_t stratified_train_count(std::size_t n_c, double fraction) {
    const auto raw = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n_c) + 0.5));
    return std::clamp<std::size_t>(raw, 1, n_c - 1);
}

/// Per-class seeded shuffle; the first stratified_train_count members go to
/// train. Both outputs keep the input's relative order.
inline SplitResult stratified_split(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("train fraction must lie in (0, 1)");
    const auto groups = ds.indices_by_class();
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (!groups[c].empty() && groups[c].size() < 2) {
            throw StratificationError(ds.label_names()[c], groups[c].size());
        }
    }
    std::vector<bool> in_train(ds.size(), false);
    const Rng base(seed, streams::split);
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (groups[c].empty()) continue;
        auto members = groups[c];
        Rng rng = base.split(c);
        rng.shuffle(members);
        const std::size_t take = stratified_train_count(members.size(), fraction);
        for (std::size_t i = 0; i < take; ++i) in_train[members[i]] = true;
    }
    SplitResult out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        (in_train[i] ? out.train_indices : out.test_indices).push_back(i);
    }
    out.train = ds.subset(out.train_indices);
    out.test = ds.subset(out.test_indices);
    return out;
}

struct FoldAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> fold_of;

    std::vector<std::size_t> members(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i) {
            if (fold_of[i] == fold) out.push_back(i);
        }
        return out;
    }
    std::vector<std::size_t> complement(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i) {
            if (fold_of[i] != fold) out.push_back(i);
        }
        return out;
    }
};

/// Each class is shuffled and dealt round-robin over the k folds. The deal
/// starts at a seed-derived fold and continues from class to class, so
/// per-class fold sizes differ by at most one and so do total fold sizes.
inline FoldAssignment stratified_folds(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw InvalidArgument("fold count must be >= 2");
    FoldAssignment out{k, std::vector<std::size_t>(ds.size(), 0)};
    const Rng base(seed, streams::folds);
    Rng offset_rng = base.split(~std::uint64_t{0});
    std::size_t next = offset_rng.below(k);
    const auto groups = ds.indices_by_class();
    for (std::size_t c = 0; c < groups.size(); ++c) {
        auto members = groups[c];
        Rng rng = base.split(c);
        rng.shuffle(members);
        for (auto i : members) {
            out.fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic family corpora.
//
// Each family has a motif; a sample is the motif tiled to a random length in
// [min_len, max_len] with every byte independently replaced by a uniform
// random byte with probability mutation_rate. A twin declaration makes one
// family's motif a copy of another's whose leading `shared` fraction is kept
// and whose tail is overwritten byte-for-byte with different values.

struct SynthFamily {
    std::string name;
    std::vector<Byte> motif;          // explicit motif; empty when random
    std::size_t random_motif_len = 0;  // used when motif is empty
    std::size_t sample_count = 0;
    double mutation_rate = 0.0;
    std::size_t min_len = 1;
    std::size_t max_len = 1;
};

struct SynthTwin {
    std::string base;     // family whose motif is copied
    std::string derived;  // family whose motif is replaced
    double shared = 0.9;
};

struct SynthSpec {
    std::vector<SynthFamily> families;
    std::vector<SynthTwin> twins;

    std::optional<std::size_t> family_index(std::string_view name) const {
        for (std::size_t i = 0; i < families.size(); ++i) {
            if (families[i].name == name) return i;
        }
        return std::nullopt;
    }

    void validate() const {
        if (families.empty()) throw InvalidArgument("synth spec has no families");
        std::set<std::string_view> names;
        for (const auto& f : families) {
            validate_family(f);
            if (!names.insert(f.name).second) throw InvalidArgument("duplicate family '" + f.name + "'");
        }
        std::set<std::string_view> derived;
        for (const auto& t : twins) {
            validate_twin(t);
            if (!derived.insert(t.derived).second) {
                throw InvalidArgument("family '" + t.derived + "' is derived by more than one twin");
            }
        }
        for (const auto& t : twins) {
            if (derived.count(t.base)) {
                throw InvalidArgument("twin base '" + t.base + "' is itself derived; chains are not supported");
            }
        }
    }

    static void validate_family(const SynthFamily& f) {
        if (f.name.empty()) throw InvalidArgument("family with empty name");
        if (f.name.find_first_of(",\t\n\r/") != std::string::npos) {
            throw InvalidArgument("family name '" + f.name + "' contains a reserved character");
        }
        if (f.sample_count < 2) throw InvalidArgument("family '" + f.name + "' needs >= 2 samples");
        if (f.motif.empty() && f.random_motif_len == 0) {
            throw InvalidArgument("family '" + f.name + "' has an empty motif");
        }
        if (!(f.mutation_rate >= 0.0 && f.mutation_rate <= 1.0)) {
            throw InvalidArgument("family '" + f.name + "' mutation rate outside [0,1]");
        }
        if (f.min_len < 1 || f.min_len > f.max_len) {
            throw InvalidArgument("family '" + f.name + "' has an invalid length range");
        }
    }

    void validate_twin(const SynthTwin& t) const {
        auto a = family_index(t.base);
        auto b = family_index(t.derived);
        if (!a || !b) throw InvalidArgument("twin refers to unknown family");
        if (*a == *b) throw InvalidArgument("family '" + t.base + "' cannot be its own twin");
        if (!(t.shared >= 0.0 && t.shared <= 1.0)) throw InvalidArgument("twin shared fraction outside [0,1]");
        const auto& fa = families[*a];
        const auto& fb = families[*b];
        const std::size_t la = fa.motif.empty() ? fa.random_motif_len : fa.motif.size();
        const std::size_t lb = fb.motif.empty() ? fb.random_motif_len : fb.motif.size();
        if (la != lb) throw InvalidArgument("twin '" + t.derived + "' motif length differs from '" + t.base + "'");
    }
};

struct SynthSample {
    std::string filename;
    std::string family;
    std::vector<Byte> bytes;
};

/// Resolved motif of every family (random motifs drawn, twins applied).
inline std::vector<std::vector<Byte>> synth_motifs(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    const Rng base(seed, streams::synth);
    std::vector<std::vector<Byte>> motifs(spec.families.size());
    for (std::size_t f = 0; f < spec.families.size(); ++f) {
        const auto& fam = spec.families[f];
        if (!fam.motif.empty()) {
            motifs[f] = fam.motif;
            continue;
        }
        Rng rng = base.split(f).split(0);
        motifs[f].resize(fam.random_motif_len);
        for (auto& b : motifs[f]) b = static_cast<Byte>(rng.below(256));
    }
    for (std::size_t t = 0; t < spec.twins.size(); ++t) {
        const auto& twin = spec.twins[t];
        const auto a = *spec.family_index(twin.base);
        const auto b = *spec.family_index(twin.derived);
        auto motif = motifs[a];
        Rng rng = base.split(b).split(1);
        const auto changed = static_cast<std::size_t>(
            std::floor((1.0 - twin.shared) * static_cast<double>(motif.size()) + 0.5));
        for (std::size_t i = motif.size() - changed; i < motif.size(); ++i) {
            motif[i] = static_cast<Byte>((motif[i] + 1 + rng.below(255)) % 256);
        }
        motifs[b] = std::move(motif);
    }
    return motifs;
}

inline std::string synth_filename(std::string_view family, std::size_t index) {
    std::string name;
    for (char ch : family) {
        const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' || ch == '_';
        name += ok ? ch : '_';
    }
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%04zu.bin", index);
    return name + suffix;
}

/// Generates the corpus, families in spec order, samples in index order.
/// Every sample draws from its own derived stream.
inline std::vector<SynthSample> synth_families(const SynthSpec& spec, std::uint64_t seed) {
    const auto motifs = synth_motifs(spec, seed);
    const Rng base(seed, streams::synth);
    std::vector<SynthSample> out;
    for (std::size_t f = 0; f < spec.families.size(); ++f) {
        const auto& fam = spec.families[f];
        const auto& motif = motifs[f];
        const Rng fam_rng = base.split(f).split(2);
        for (std::size_t s = 0; s < fam.sample_count; ++s) {
            Rng rng = fam_rng.split(s);
            const std::size_t len = fam.min_len + rng.below(fam.max_len - fam.min_len + 1);
            SynthSample sample{synth_filename(fam.name, s), fam.name, std::vector<Byte>(len)};
            for (std::size_t i = 0; i < len; ++i) {
                Byte b = motif[i % motif.size()];
                if (fam.mutation_rate > 0.0 && rng.uniform() < fam.mutation_rate) {
                    b = static_cast<Byte>(rng.below(256));
                }
                sample.bytes[i] = b;
            }
            out.push_back(std::move(sample));
        }
    }
    return out;
}

/// Manifest text: one `filename<TAB>family` line per sample.
inline std::string synth_manifest(const std::vector<SynthSample>& corpus) {
    std::string out;
    for (const auto& s : corpus) out += s.filename + '\t' + s.family + '\n';
    return out;
}

/// Parses a `filename<TAB>family` manifest into a map.
inline std::map<std::string, std::string> parse_manifest(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
            throw ParseError(lineno, "expected 'filename<TAB>family'");
        }
        if (!out.emplace(line.substr(0, tab), line.substr(tab + 1)).second) {
            throw ParseError(lineno, "duplicate manifest entry '" + line.substr(0, tab) + "'");
        }
    }
    return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_number(std::string_view text, std::size_t lineno, const char* what) {
    T v{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw ParseError(lineno, std::string("bad ") + what + " '" + std::string(text) + "'");
    }
    return v;
}

inline std::vector<Byte> parse_hex(std::string_view text, std::size_t lineno) {
    if (text.size() % 2 != 0 || text.empty()) throw ParseError(lineno, "hex motif needs an even, non-zero digit count");
    std::vector<Byte> out;
    for (std::size_t i = 0; i < text.size(); i += 2) {
        unsigned v = 0;
        auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + i + 2, v, 16);
        if (ec != std::errc{} || ptr != text.data() + i + 2) throw ParseError(lineno, "bad hex digit in motif");
        out.push_back(static_cast<Byte>(v));
    }
    return out;
}

}  // namespace detail

/// Parses the key-value synth document:
///
///     [family]
///     name = Alpha
///     motif = random 96          # or: motif = hex 4d5a9000...
///     samples = 200
///     mutation = 0.05
///     length = 12000 28000       # inclusive byte-length range
///
///     [twin]
///     base = Delta
///     derived = Epsilon
///     shared = 0.9
///
/// A derived twin still needs its own [family] block; its motif line may be
/// omitted.
inline SynthSpec parse_synth_spec(std::string_view text) {
    SynthSpec spec;
    enum class Section { none, family, twin } section = Section::none;
    std::vector<std::size_t> family_lines;
    std::vector<std::size_t> twin_lines;
    std::vector<std::set<std::string>> section_keys;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string line = detail::trim(raw);
        if (line.empty()) continue;
        if (line == "[family]") {
            section = Section::family;
            spec.families.emplace_back();
            family_lines.push_back(lineno);
            section_keys.emplace_back();
            continue;
        }
        if (line == "[twin]") {
            section = Section::twin;
            spec.twins.emplace_back();
            twin_lines.push_back(lineno);
            section_keys.emplace_back();
            continue;
        }
        if (line.front() == '[') throw ParseError(lineno, "unknown section " + line);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        if (section == Section::none) throw ParseError(lineno, "key outside of a [family] or [twin] section");
        if (!section_keys.back().insert(key).second) throw ParseError(lineno, "duplicate key '" + key + "'");

        if (section == Section::family) {
            auto& fam = spec.families.back();
            if (key == "name") {
                fam.name = value;
            } else if (key == "motif") {
                std::istringstream parts(value);
                std::string kind, arg, extra;
                parts >> kind >> arg;
                if (arg.empty() || (parts >> extra)) throw ParseError(lineno, "motif must be 'random <len>' or 'hex <digits>'");
                if (kind == "random") {
                    fam.random_motif_len = detail::parse_number<std::size_t>(arg, lineno, "motif length");
                } else if (kind == "hex") {
                    fam.motif = detail::parse_hex(arg, lineno);
                } else {
                    throw ParseError(lineno, "unknown motif kind '" + kind + "'");
                }
            } else if (key == "samples") {
                fam.sample_count = detail::parse_number<std::size_t>(value, lineno, "sample count");
            } else if (key == "mutation") {
                fam.mutation_rate = detail::parse_number<double>(value, lineno, "mutation rate");
            } else if (key == "length") {
                std::istringstream parts(value);
                std::string lo, hi, extra;
                parts >> lo >> hi;
                if (hi.empty() || (parts >> extra)) throw ParseError(lineno, "length must be '<min> <max>'");
                fam.min_len = detail::parse_number<std::size_t>(lo, lineno, "length");
                fam.max_len = detail::parse_number<std::size_t>(hi, lineno, "length");
            } else {
                throw ParseError(lineno, "unknown family key '" + key + "'");
            }
        } else {
            auto& twin = spec.twins.back();
            if (key == "base") {
                twin.base = value;
            } else if (key == "derived") {
                twin.derived = value;
            } else if (key == "shared") {
                twin.shared = detail::parse_number<double>(value, lineno, "shared fraction");
            } else {
                throw ParseError(lineno, "unknown twin key '" + key + "'");
            }
        }
    }

    // Derived twins may omit their motif; borrow the base length so the
    // family validates (synth_motifs overwrites it).
    for (const auto& t : spec.twins) {
        auto a = spec.family_index(t.base);
        auto b = spec.family_index(t.derived);
        if (a && b && spec.families[*b].motif.empty() && spec.families[*b].random_motif_len == 0) {
            const auto& base = spec.families[*a];
            spec.families[*b].random_motif_len = base.motif.empty() ? base.random_motif_len : base.motif.size();
        }
    }
    std::size_t checked = 0;  // sections validated so far
    try {
        for (; checked < spec.families.size(); ++checked) SynthSpec::validate_family(spec.families[checked]);
        for (const auto& t : spec.twins) {
            spec.validate_twin(t);
            ++checked;
        }
        spec.validate();
    } catch (const InvalidArgument& e) {
        const std::size_t line = checked < family_lines.size() + twin_lines.size()
                                     ? (checked < family_lines.size() ? family_lines[checked]
                                                                      : twin_lines[checked - family_lines.size()])
                                     : lineno;
        throw ParseError(line, e.what());
    }
    return spec;
}

}  // namespace binsight
