#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "maskmatch/data/dataset_index.hpp"

namespace maskmatch::data {

enum class Role { train, validation, holdout };

std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view s);

struct SplitAssignment {
    Role role = Role::train;
    std::set<std::string> identity_ids;

    bool operator==(const SplitAssignment&) const = default;
};

// Train and validation shares of the identity universe; the remainder is holdout.
struct SplitFractions {
    double train = 0.8;
    double validation = 0.1;

    double holdout() const { return 1.0 - train - validation; }
    bool operator==(const SplitFractions&) const = default;
};

struct IdentitySplit {
    std::uint64_t seed = 0;
    SplitFractions fractions;
    std::array<SplitAssignment, 3> roles{{{Role::train, {}}, {Role::validation, {}}, {Role::holdout, {}}}};

    const SplitAssignment& get(Role r) const { return roles[static_cast<std::size_t>(r)]; }
    SplitAssignment& get(Role r) { return roles[static_cast<std::size_t>(r)]; }
    std::optional<Role> role_of(const std::string& identity_id) const;

    bool operator==(const IdentitySplit&) const = default;
};

// Identity-disjoint, seed-deterministic assignment. Identities are sorted,
// shuffled with the seed and cut by rounded fractions, so image counts never
// influence the outcome. Throws DomainError for invalid fractions and
// InsufficientIdentities when a role with a positive fraction would be empty.
IdentitySplit split_identities(const DatasetIndex& index, SplitFractions fractions, std::uint64_t seed);

// Split file: "# seed=<n> train=<f> validation=<f>" preamble, header
// identity_id,role, one row per identity in sorted order.
std::string serialize_split(const IdentitySplit& split);
IdentitySplit parse_split(std::string_view text);
void save_split(const IdentitySplit& split, const std::filesystem::path& path);
IdentitySplit load_split(const std::filesystem::path& path);

}  // namespace maskmatch::data
