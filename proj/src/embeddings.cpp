#include "lootwatch/embeddings.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace lootwatch {

void FeatureTable::insert(FeatureKey key, std::vector<double> values) {
    if (rows.empty() && dim == 0) dim = values.size();
    if (values.size() != dim)
        throw DataError("row (" + key.site_id + ", " + key.period + ") has " + std::to_string(values.size()) +
                        " values, expected " + std::to_string(dim));
    for (double v : values)
        if (!std::isfinite(v)) throw DataError("non-finite value at (" + key.site_id + ", " + key.period + ")");
    auto [it, inserted] = rows.emplace(std::move(key), std::move(values));
    if (!inserted) throw DataError("duplicate key (" + it->first.site_id + ", " + it->first.period + ")");
}

const std::vector<double>* FeatureTable::find(const FeatureKey& key) const {
    auto it = rows.find(key);
    return it == rows.end() ? nullptr : &it->second;
}

std::string feature_column_name(std::size_t index, std::size_t dim) {
    std::size_t width = 2;
    for (std::size_t v = dim > 0 ? dim - 1 : 0; v >= 100; v /= 10) ++width;
    std::string digits = std::to_string(index);
    if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
    return "f" + digits;
}

std::string feature_store_csv(const FeatureTable& table) {
    std::string out = "site_id,year_month";
    for (std::size_t j = 0; j < table.dim; ++j) out += "," + feature_column_name(j, table.dim);
    out += "\n";
    for (const auto& [key, values] : table.rows) {
        out += key.site_id;
        out += ",";
        out += key.period;
        for (double v : values) {
            out += ",";
            out += format_double(v);
        }
        out += "\n";
    }
    return out;
}

void write_feature_store(const FeatureTable& table, const std::filesystem::path& path) {
    write_text_file(path, feature_store_csv(table));
}

FeatureTable parse_feature_store(std::string_view text, const std::string& source) {
    auto lines = split(text, '\n');
    if (lines.empty()) throw DataError(source + ": empty feature store");
    auto header = split(trim(lines[0]), ',');
    if (header.size() < 2 || header[0] != "site_id" || header[1] != "year_month")
        throw DataError(source + ": header must start with site_id,year_month");
    FeatureTable table;
    table.dim = header.size() - 2;
    for (std::size_t j = 0; j < table.dim; ++j)
        if (header[j + 2] != feature_column_name(j, table.dim))
            throw DataError(source + ": unexpected column '" + header[j + 2] + "', expected '" +
                            feature_column_name(j, table.dim) + "'");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::string line = trim(lines[i]);
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != table.dim + 2)
            throw DataError(source + ": line " + std::to_string(i + 1) + " has " + std::to_string(cells.size()) +
                            " fields, expected " + std::to_string(table.dim + 2));
        std::vector<double> values(table.dim);
        for (std::size_t j = 0; j < table.dim; ++j) {
            try {
                values[j] = parse_double(cells[j + 2]);
            } catch (const DataError&) {
                throw DataError(source + ": malformed value at (" + cells[0] + ", " + cells[1] + ") column " +
                                header[j + 2]);
            }
        }
        table.insert({cells[0], cells[1]}, std::move(values));
    }
    return table;
}

FeatureTable read_feature_store(const std::filesystem::path& path) {
    return parse_feature_store(read_text_file(path), path.string());
}

namespace {
struct FamilyInfo {
    EmbeddingFamily family;
    std::string_view name;
    std::size_t dim;
};
constexpr std::array<FamilyInfo, 6> kFamilies{{
    {EmbeddingFamily::satclip_v, "satclip_v", 768},
    {EmbeddingFamily::georsclip, "georsclip", 512},
    {EmbeddingFamily::dinov3, "dinov3", 1024},
    {EmbeddingFamily::prithvi, "prithvi", 1024},
    {EmbeddingFamily::satlas, "satlas", 2048},
    {EmbeddingFamily::satmae, "satmae", 768},
}};
}  // namespace

std::string_view family_name(EmbeddingFamily f) {
    for (const auto& info : kFamilies)
        if (info.family == f) return info.name;
    return "unknown";
}

EmbeddingFamily parse_family(std::string_view name) {
    for (const auto& info : kFamilies)
        if (info.name == name) return info.family;
    throw ConfigError("unknown embedding family '" + std::string(name) +
                      "' (expected satclip_v|georsclip|dinov3|prithvi|satlas|satmae)");
}

std::size_t family_dim(EmbeddingFamily f) {
    for (const auto& info : kFamilies)
        if (info.family == f) return info.dim;
    return 0;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
    auto p = csv_path;
    return p.replace_extension(".json");
}

EmbeddingSeries load_embeddings(const std::filesystem::path& path, std::string_view family) {
    EmbeddingSeries series;
    series.family = parse_family(family);
    series.dim = family_dim(series.family);

    const auto meta_path = sidecar_path(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_text_file(meta_path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(meta_path.string() + ": malformed sidecar: " + e.what());
    }
    try {
        const auto meta_family = meta.at("family").get<std::string>();
        if (meta_family != family)
            throw DataError(meta_path.string() + ": sidecar family '" + meta_family + "' does not match '" +
                            std::string(family) + "'");
        if (meta.at("dim").get<std::size_t>() != series.dim)
            throw DataError(meta_path.string() + ": sidecar dim " + std::to_string(meta.at("dim").get<std::size_t>()) +
                            " does not match " + std::string(family) + " (" + std::to_string(series.dim) + ")");
        series.masked = meta.at("masked").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(meta_path.string() + ": malformed sidecar: " + e.what());
    }

    series.table = read_feature_store(path);
    if (series.table.dim != series.dim)
        throw DataError(path.string() + ": " + std::string(family) + " embeddings must have " +
                        std::to_string(series.dim) + " columns, found " + std::to_string(series.table.dim));
    return series;
}

void save_embeddings(const EmbeddingSeries& series, const std::filesystem::path& path) {
    if (series.table.dim != series.dim || series.dim != family_dim(series.family))
        throw DataError("embedding series dimension does not match its family");
    write_feature_store(series.table, path);
    nlohmann::ordered_json meta;
    meta["family"] = family_name(series.family);
    meta["dim"] = series.dim;
    meta["masked"] = series.masked;
    write_text_file(sidecar_path(path), meta.dump() + "\n");
}

std::vector<MonthlySequence> align_series(const FeatureTable& table, std::span<const std::string> site_ids,
                                          std::span<const YearMonth> months) {
    if (months.empty()) throw ConfigError("month window is empty");
    std::vector<YearMonth> ordered(months.begin(), months.end());
    std::sort(ordered.begin(), ordered.end());
    if (std::adjacent_find(ordered.begin(), ordered.end()) != ordered.end())
        throw ConfigError("month window has duplicates");
    std::vector<MonthlySequence> out;
    std::vector<std::string> missing;
    out.reserve(site_ids.size());
    for (const auto& id : site_ids) {
        MonthlySequence seq;
        seq.site_id = id;
        for (auto ym : ordered) {
            const auto* row = table.find({id, ym.str()});
            if (!row) {
                missing.push_back("(" + id + ", " + ym.str() + ")");
                continue;
            }
            seq.months.push_back(ym);
            seq.vectors.push_back(*row);
        }
        out.push_back(std::move(seq));
    }
    if (!missing.empty()) {
        std::string msg = std::to_string(missing.size()) + " missing (site, month) rows:";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }
    return out;
}

std::vector<MonthlySequence> align_series(const FeatureTable& table, const SiteManifest& manifest,
                                          std::span<const YearMonth> months) {
    std::vector<std::string> ids;
    for (const auto& e : manifest.entries) ids.push_back(e.site_id);
    return align_series(table, ids, months);
}

}  // namespace lootwatch
