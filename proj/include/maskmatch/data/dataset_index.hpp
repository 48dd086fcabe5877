#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace maskmatch::data {

enum class Variant { unmasked, masked };

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view s);

struct ImageRecord {
    std::string image_id;
    std::string identity_id;
    std::string dataset_id;
    Variant variant = Variant::unmasked;
    std::filesystem::path path;

    bool operator==(const ImageRecord&) const = default;
};

// Record positions (into DatasetIndex::records()) of one identity, per variant.
struct IdentityEntry {
    std::vector<std::size_t> unmasked;
    std::vector<std::size_t> masked;

    const std::vector<std::size_t>& of(Variant v) const { return v == Variant::masked ? masked : unmasked; }
    bool has_both() const { return !unmasked.empty() && !masked.empty(); }
};

// Immutable identity-indexed image manifest. Safe to share across threads.
class DatasetIndex {
public:
    DatasetIndex() = default;

    // Throws DuplicateImageId (line = 1-based record position) and DataError on
    // empty paths or an identity spread over several datasets.
    static DatasetIndex from_records(std::vector<ImageRecord> records,
                                     std::filesystem::path root = {},
                                     std::string dataset_id = {});

    // The common dataset id of all records; empty when the index mixes datasets.
    const std::string& dataset_id() const noexcept { return dataset_id_; }
    std::vector<std::string> dataset_ids() const;

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path resolve(const ImageRecord& record) const;

    std::span<const ImageRecord> records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    const std::map<std::string, IdentityEntry>& identity_map() const noexcept { return identities_; }
    const IdentityEntry& identity(const std::string& identity_id) const;

    const ImageRecord* find(std::string_view image_id) const;
    const ImageRecord& at(std::string_view image_id) const;

    // Sorted identity ids; `paired_identities` keeps those with both variants.
    std::vector<std::string> identities() const;
    std::vector<std::string> paired_identities() const;

    // Records of the given identities, in original order.
    DatasetIndex subset(const std::vector<std::string>& identity_ids) const;
    std::map<std::string, DatasetIndex> by_dataset() const;

    DatasetIndex with_root(std::filesystem::path root) const;

private:
    std::vector<ImageRecord> records_;
    std::map<std::string, IdentityEntry> identities_;
    std::unordered_map<std::string, std::size_t> by_image_id_;
    std::filesystem::path root_;
    std::string dataset_id_;
};

// Manifest CSV: optional "# root=<dir>" preamble, then the header
// image_id,identity_id,dataset_id,variant,path. A relative root is taken
// relative to the manifest's directory; root_override replaces it.
DatasetIndex load_manifest(const std::filesystem::path& path,
                           const std::optional<std::filesystem::path>& root_override = std::nullopt);
DatasetIndex parse_manifest(std::string_view text, const std::filesystem::path& root);
std::string serialize_manifest(const DatasetIndex& index, const std::string& root_text = {});
void save_manifest(const DatasetIndex& index, const std::filesystem::path& path);

// Directory tree <root>/<identity_id>/<image file>, all of one variant.
DatasetIndex scan_image_tree(const std::filesystem::path& root, const std::string& dataset_id, Variant variant);

struct VariantStats {
    std::size_t identities = 0;
    std::size_t images = 0;

    bool operator==(const VariantStats&) const = default;
};

struct DatasetStats {
    VariantStats unmasked;
    VariantStats masked;

    bool operator==(const DatasetStats&) const = default;
};

DatasetStats stats(const DatasetIndex& index);

}  // namespace maskmatch::data
