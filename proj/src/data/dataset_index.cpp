#include "maskmatch/data/dataset_index.hpp"

#include <algorithm>
#include <set>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/text.hpp"

namespace maskmatch::data {

namespace fs = std::filesystem;

std::string_view to_string(Variant v) {
    return v == Variant::masked ? "masked" : "unmasked";
}

std::optional<Variant> parse_variant(std::string_view s) {
    if (s == "unmasked") {
        return Variant::unmasked;
    }
    if (s == "masked") {
        return Variant::masked;
    }
    return std::nullopt;
}

DatasetIndex DatasetIndex::from_records(std::vector<ImageRecord> records, fs::path root, std::string dataset_id) {
    DatasetIndex index;
    index.root_ = std::move(root);
    std::map<std::string, std::string> dataset_of_identity;
    std::set<std::string> datasets;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const ImageRecord& r = records[i];
        if (r.image_id.empty()) {
            throw ManifestParseError("empty image_id", i + 1);
        }
        if (r.identity_id.empty()) {
            throw ManifestParseError("empty identity_id", i + 1);
        }
        if (r.path.empty()) {
            throw ManifestParseError("empty path for image '" + r.image_id + "'", i + 1);
        }
        if (!index.by_image_id_.emplace(r.image_id, i).second) {
            throw DuplicateImageId("duplicate image_id '" + r.image_id + "'", i + 1);
        }
        const auto [it, inserted] = dataset_of_identity.emplace(r.identity_id, r.dataset_id);
        if (!inserted && it->second != r.dataset_id) {
            throw ManifestParseError("identity '" + r.identity_id + "' appears in datasets '" + it->second +
                                         "' and '" + r.dataset_id + "'",
                                     i + 1);
        }
        datasets.insert(r.dataset_id);
        IdentityEntry& entry = index.identities_[r.identity_id];
        (r.variant == Variant::masked ? entry.masked : entry.unmasked).push_back(i);
    }
    index.records_ = std::move(records);
    if (!dataset_id.empty()) {
        index.dataset_id_ = std::move(dataset_id);
    } else if (datasets.size() == 1) {
        index.dataset_id_ = *datasets.begin();
    }
    return index;
}

std::vector<std::string> DatasetIndex::dataset_ids() const {
    std::set<std::string> ids;
    for (const auto& r : records_) {
        ids.insert(r.dataset_id);
    }
    return {ids.begin(), ids.end()};
}

fs::path DatasetIndex::resolve(const ImageRecord& record) const {
    if (record.path.is_absolute() || root_.empty()) {
        return record.path;
    }
    return root_ / record.path;
}

const IdentityEntry& DatasetIndex::identity(const std::string& identity_id) const {
    const auto it = identities_.find(identity_id);
    if (it == identities_.end()) {
        throw DataError("unknown identity '" + identity_id + "'");
    }
    return it->second;
}

const ImageRecord* DatasetIndex::find(std::string_view image_id) const {
    const auto it = by_image_id_.find(std::string(image_id));
    return it == by_image_id_.end() ? nullptr : &records_[it->second];
}

const ImageRecord& DatasetIndex::at(std::string_view image_id) const {
    if (const ImageRecord* r = find(image_id)) {
        return *r;
    }
    throw DataError("unknown image_id '" + std::string(image_id) + "'");
}

std::vector<std::string> DatasetIndex::identities() const {
    std::vector<std::string> out;
    out.reserve(identities_.size());
    for (const auto& [id, entry] : identities_) {
        out.push_back(id);
    }
    return out;
}

std::vector<std::string> DatasetIndex::paired_identities() const {
    std::vector<std::string> out;
    for (const auto& [id, entry] : identities_) {
        if (entry.has_both()) {
            out.push_back(id);
        }
    }
    return out;
}

DatasetIndex DatasetIndex::subset(const std::vector<std::string>& identity_ids) const {
    const std::set<std::string> keep(identity_ids.begin(), identity_ids.end());
    std::vector<ImageRecord> out;
    for (const auto& r : records_) {
        if (keep.contains(r.identity_id)) {
            out.push_back(r);
        }
    }
    return from_records(std::move(out), root_, dataset_id_);
}

std::map<std::string, DatasetIndex> DatasetIndex::by_dataset() const {
    std::map<std::string, std::vector<ImageRecord>> grouped;
    for (const auto& r : records_) {
        grouped[r.dataset_id].push_back(r);
    }
    std::map<std::string, DatasetIndex> out;
    for (auto& [id, recs] : grouped) {
        out.emplace(id, from_records(std::move(recs), root_, id));
    }
    return out;
}

DatasetIndex DatasetIndex::with_root(fs::path root) const {
    DatasetIndex copy = *this;
    copy.root_ = std::move(root);
    return copy;
}

namespace {

const std::vector<std::string> kManifestHeader = {"image_id", "identity_id", "dataset_id", "variant", "path"};

std::optional<std::string> preamble_value(const std::vector<std::string>& preamble, std::string_view key) {
    for (const auto& line : preamble) {
        const auto eq = line.find('=');
        if (eq != std::string::npos && trim(line.substr(0, eq)) == key) {
            return trim(line.substr(eq + 1));
        }
    }
    return std::nullopt;
}

DatasetIndex build_from_document(const CsvDocument& doc, const fs::path& root) {
    if (!doc.has_header) {
        return DatasetIndex::from_records({}, root);
    }
    if (doc.header.fields != kManifestHeader) {
        throw ManifestParseError("expected header image_id,identity_id,dataset_id,variant,path", doc.header.line);
    }
    std::vector<ImageRecord> records;
    records.reserve(doc.rows.size());
    std::unordered_map<std::string, std::size_t> seen;
    for (const auto& row : doc.rows) {
        if (row.fields.size() != kManifestHeader.size()) {
            throw ManifestParseError("expected 5 fields, got " + std::to_string(row.fields.size()), row.line);
        }
        const auto variant = parse_variant(row.fields[3]);
        if (!variant) {
            throw ManifestParseError("unknown variant '" + row.fields[3] + "'", row.line);
        }
        if (row.fields[0].empty() || row.fields[1].empty() || row.fields[4].empty()) {
            throw ManifestParseError("empty image_id, identity_id or path", row.line);
        }
        if (!seen.emplace(row.fields[0], row.line).second) {
            throw DuplicateImageId("duplicate image_id '" + row.fields[0] + "'", row.line);
        }
        records.push_back({row.fields[0], row.fields[1], row.fields[2], *variant, fs::path(row.fields[4])});
    }
    try {
        return DatasetIndex::from_records(std::move(records), root);
    } catch (const LineError& e) {
        // Re-anchor record positions onto file lines.
        const std::size_t pos = e.line();
        const std::size_t line = pos >= 1 && pos <= doc.rows.size() ? doc.rows[pos - 1].line : pos;
        throw ManifestParseError(e.message(), line);
    }
}

}  // namespace

DatasetIndex parse_manifest(std::string_view text, const fs::path& root) {
    CsvDocument doc;
    try {
        doc = parse_csv(text);
    } catch (const LineError& e) {
        throw ManifestParseError(e.message(), e.line());
    }
    return build_from_document(doc, root);
}

DatasetIndex load_manifest(const fs::path& path, const std::optional<fs::path>& root_override) {
    CsvDocument doc;
    try {
        doc = read_csv_file(path);
    } catch (const LineError& e) {
        throw ManifestParseError(e.message(), e.line());
    }
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    fs::path root = base;
    if (root_override) {
        root = *root_override;
    } else if (auto declared = preamble_value(doc.preamble, "root")) {
        const fs::path p(*declared);
        root = p.is_absolute() ? p : base / p;
    }
    return build_from_document(doc, root.lexically_normal());
}

std::string serialize_manifest(const DatasetIndex& index, const std::string& root_text) {
    std::string out;
    if (!root_text.empty()) {
        out += "# root=" + root_text + "\n";
    }
    out += csv_join(kManifestHeader) + "\n";
    for (const auto& r : index.records()) {
        out += csv_join({r.image_id, r.identity_id, r.dataset_id, std::string(to_string(r.variant)),
                         r.path.generic_string()}) +
               "\n";
    }
    return out;
}

void save_manifest(const DatasetIndex& index, const fs::path& path) {
    // Root is stored relative to the manifest when possible.
    std::string root_text;
    if (!index.root().empty()) {
        const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
        const fs::path rel = fs::absolute(index.root()).lexically_normal().lexically_relative(
            fs::absolute(dir).lexically_normal());
        root_text = rel.empty() ? fs::absolute(index.root()).generic_string() : rel.generic_string();
    }
    write_text_file(path, serialize_manifest(index, root_text));
}

DatasetIndex scan_image_tree(const fs::path& root, const std::string& dataset_id, Variant variant) {
    if (!fs::is_directory(root)) {
        throw DataError("not a directory: " + root.string());
    }
    static const std::set<std::string> kExtensions = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm"};
    std::vector<fs::path> identity_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) {
            identity_dirs.push_back(e.path());
        }
    }
    std::sort(identity_dirs.begin(), identity_dirs.end());
    std::vector<ImageRecord> records;
    for (const auto& dir : identity_dirs) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            std::string ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (e.is_regular_file() && kExtensions.contains(ext)) {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        const std::string identity = dir.filename().string();
        for (const auto& f : files) {
            const fs::path rel = f.lexically_relative(root);
            records.push_back({dataset_id + "/" + rel.generic_string(), identity, dataset_id, variant, rel});
        }
    }
    return DatasetIndex::from_records(std::move(records), root, dataset_id);
}

DatasetStats stats(const DatasetIndex& index) {
    DatasetStats s;
    for (const auto& [id, entry] : index.identity_map()) {
        if (!entry.unmasked.empty()) {
            ++s.unmasked.identities;
            s.unmasked.images += entry.unmasked.size();
        }
        if (!entry.masked.empty()) {
            ++s.masked.identities;
            s.masked.images += entry.masked.size();
        }
    }
    return s;
}

}  // namespace maskmatch::data
