#include "maskmatch/data/split.hpp"

#include <cmath>
#include <map>
#include <vector>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/rng.hpp"
#include "maskmatch/common/text.hpp"

namespace maskmatch::data {

std::string_view to_string(Role r) {
    switch (r) {
        case Role::train:
            return "train";
        case Role::validation:
            return "validation";
        case Role::holdout:
            return "holdout";
    }
    return "train";
}

std::optional<Role> parse_role(std::string_view s) {
    if (s == "train") {
        return Role::train;
    }
    if (s == "validation") {
        return Role::validation;
    }
    if (s == "holdout") {
        return Role::holdout;
    }
    return std::nullopt;
}

std::optional<Role> IdentitySplit::role_of(const std::string& identity_id) const {
    for (const auto& a : roles) {
        if (a.identity_ids.contains(identity_id)) {
            return a.role;
        }
    }
    return std::nullopt;
}

namespace {

constexpr double kFractionEps = 1e-12;

}  // namespace

IdentitySplit split_identities(const DatasetIndex& index, SplitFractions fractions, std::uint64_t seed) {
    if (!(fractions.train > 0.0) || !(fractions.validation >= 0.0) ||
        fractions.train + fractions.validation > 1.0 + kFractionEps) {
        throw DomainError("split fractions must satisfy train > 0, validation >= 0, train + validation <= 1");
    }
    std::vector<std::string> ids = index.identities();
    Rng rng(derive_seed(seed, "split_identities"));
    rng.shuffle(ids);

    const auto n = static_cast<double>(ids.size());
    std::size_t n_train = std::min(ids.size(), static_cast<std::size_t>(std::llround(fractions.train * n)));
    std::size_t n_val = std::min(ids.size() - n_train,
                                 static_cast<std::size_t>(std::llround(fractions.validation * n)));
    const bool wants_holdout = fractions.holdout() > kFractionEps;
    // Rounding must not starve a requested holdout when a donor role can spare one.
    if (wants_holdout && n_train + n_val == ids.size()) {
        if (n_train > 1 && n_train >= n_val) {
            --n_train;
        } else if (n_val > 1) {
            --n_val;
        }
    }
    const std::size_t n_hold = ids.size() - n_train - n_val;

    if (n_train == 0) {
        throw InsufficientIdentities("train role would receive 0 of " + std::to_string(ids.size()) + " identities");
    }
    if (fractions.validation > kFractionEps && n_val == 0) {
        throw InsufficientIdentities("validation role would receive 0 of " + std::to_string(ids.size()) +
                                     " identities");
    }
    if (wants_holdout && n_hold == 0) {
        throw InsufficientIdentities("holdout role would receive 0 of " + std::to_string(ids.size()) +
                                     " identities");
    }

    IdentitySplit split;
    split.seed = seed;
    split.fractions = fractions;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const Role role = i < n_train ? Role::train : (i < n_train + n_val ? Role::validation : Role::holdout);
        split.get(role).identity_ids.insert(ids[i]);
    }
    return split;
}

std::string serialize_split(const IdentitySplit& split) {
    std::string out = "# seed=" + std::to_string(split.seed) + " train=" + format_double(split.fractions.train) +
                      " validation=" + format_double(split.fractions.validation) + "\n";
    out += "identity_id,role\n";
    std::map<std::string, Role> all;
    for (const auto& a : split.roles) {
        for (const auto& id : a.identity_ids) {
            all.emplace(id, a.role);
        }
    }
    for (const auto& [id, role] : all) {
        out += csv_join({id, std::string(to_string(role))}) + "\n";
    }
    return out;
}

IdentitySplit parse_split(std::string_view text) {
    CsvDocument doc;
    try {
        doc = parse_csv(text);
    } catch (const LineError& e) {
        throw ManifestParseError(e.message(), e.line());
    }
    IdentitySplit split;
    bool have_meta = false;
    for (const auto& line : doc.preamble) {
        if (line.find("seed=") == std::string::npos) {
            continue;
        }
        const auto kv = parse_key_values(line);
        const auto seed = kv.contains("seed") ? parse_int(kv.at("seed")) : std::nullopt;
        const auto train = kv.contains("train") ? parse_double(kv.at("train")) : std::nullopt;
        const auto val = kv.contains("validation") ? parse_double(kv.at("validation")) : std::nullopt;
        if (!seed || !train || !val) {
            throw ManifestParseError("split preamble needs seed, train and validation", 1);
        }
        split.seed = static_cast<std::uint64_t>(*seed);
        split.fractions = {*train, *val};
        have_meta = true;
    }
    if (!have_meta) {
        throw ManifestParseError("missing split preamble", 1);
    }
    if (!doc.has_header || doc.header.fields != std::vector<std::string>{"identity_id", "role"}) {
        throw ManifestParseError("expected header identity_id,role", doc.has_header ? doc.header.line : 1);
    }
    std::set<std::string> seen;
    for (const auto& row : doc.rows) {
        if (row.fields.size() != 2) {
            throw ManifestParseError("expected 2 fields", row.line);
        }
        const auto role = parse_role(row.fields[1]);
        if (!role) {
            throw ManifestParseError("unknown role '" + row.fields[1] + "'", row.line);
        }
        if (!seen.insert(row.fields[0]).second) {
            throw ManifestParseError("identity '" + row.fields[0] + "' assigned twice", row.line);
        }
        split.get(*role).identity_ids.insert(row.fields[0]);
    }
    return split;
}

void save_split(const IdentitySplit& split, const std::filesystem::path& path) {
    write_text_file(path, serialize_split(split));
}

IdentitySplit load_split(const std::filesystem::path& path) {
    return parse_split(read_text_file(path));
}

}  // namespace maskmatch::data
