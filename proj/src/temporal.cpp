#include "lootwatch/temporal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <json.hpp>

namespace lootwatch {

void MonthlySequence::validate() const {
    if (vectors.empty()) throw DataError("monthly sequence for '" + site_id + "' is empty");
    if (months.size() != vectors.size())
        throw DataError("monthly sequence for '" + site_id + "' has mismatched month tags");
    const std::size_t d = vectors.front().size();
    for (std::size_t t = 0; t < vectors.size(); ++t) {
        if (vectors[t].size() != d) throw DataError("monthly sequence for '" + site_id + "' has non-uniform width");
        if (t > 0 && !(months[t - 1] < months[t]))
            throw DataError("monthly sequence for '" + site_id + "' months not strictly increasing");
    }
}

std::string_view aggregation_name(Aggregation a) {
    switch (a) {
        case Aggregation::mean: return "mean";
        case Aggregation::median: return "median";
        case Aggregation::concat: return "concat";
        case Aggregation::pca: return "pca";
        case Aggregation::trend: return "trend";
    }
    return "mean";
}

Aggregation parse_aggregation(std::string_view name) {
    for (auto a : {Aggregation::mean, Aggregation::median, Aggregation::concat, Aggregation::pca, Aggregation::trend})
        if (aggregation_name(a) == name) return a;
    throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected mean|median|concat|pca|trend)");
}

std::vector<double> agg_mean(const MonthlySequence& seq) {
    seq.validate();
    std::vector<double> out(seq.dim(), 0.0);
    for (const auto& v : seq.vectors)
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += v[j];
    const double t = static_cast<double>(seq.length());
    for (double& x : out) x /= t;
    return out;
}

std::vector<double> agg_median(const MonthlySequence& seq) {
    seq.validate();
    const std::size_t d = seq.dim();
    const std::size_t t = seq.length();
    std::vector<double> out(d);
    std::vector<double> column(t);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < t; ++i) column[i] = seq.vectors[i][j];
        auto mid = column.begin() + static_cast<std::ptrdiff_t>((t - 1) / 2);
        std::nth_element(column.begin(), mid, column.end());
        out[j] = *mid;
    }
    return out;
}

std::vector<double> agg_concat(const MonthlySequence& seq) {
    seq.validate();
    std::vector<double> out;
    out.reserve(seq.dim() * seq.length());
    for (const auto& v : seq.vectors) out.insert(out.end(), v.begin(), v.end());
    return out;
}

std::vector<double> agg_trend(const MonthlySequence& seq) {
    seq.validate();
    const std::size_t t = seq.length();
    if (t < 2) throw DataError("trend aggregation needs at least 2 months for '" + seq.site_id + "'");
    const double tbar = static_cast<double>(t - 1) / 2.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < t; ++i) sxx += (static_cast<double>(i) - tbar) * (static_cast<double>(i) - tbar);
    std::vector<double> out(seq.dim(), 0.0);
    for (std::size_t j = 0; j < out.size(); ++j) {
        double ybar = 0.0;
        for (std::size_t i = 0; i < t; ++i) ybar += seq.vectors[i][j];
        ybar /= static_cast<double>(t);
        double sxy = 0.0;
        for (std::size_t i = 0; i < t; ++i) sxy += (static_cast<double>(i) - tbar) * (seq.vectors[i][j] - ybar);
        out[j] = sxy / sxx;
    }
    return out;
}

std::vector<double> aggregate(const MonthlySequence& seq, Aggregation a) {
    switch (a) {
        case Aggregation::mean: return agg_mean(seq);
        case Aggregation::median: return agg_median(seq);
        case Aggregation::concat:
        case Aggregation::pca: return agg_concat(seq);
        case Aggregation::trend: return agg_trend(seq);
    }
    return agg_mean(seq);
}

std::string fingerprint_rows(const Matrix& rows) {
    Fnv1a h;
    h.update(static_cast<std::uint64_t>(rows.rows)).update(static_cast<std::uint64_t>(rows.cols));
    h.update(rows.data.data(), rows.data.size() * sizeof(double));
    return h.hex();
}

PcaModel pca_fit(const Matrix& rows, std::size_t cap) {
    const std::size_t n = rows.rows;
    const std::size_t d = rows.cols;
    if (n < 2) throw DataError("PCA needs at least 2 training rows");
    if (d == 0) throw DataError("PCA input has zero width");
    if (cap == 0) throw ConfigError("PCA cap must be positive");
    for (double v : rows.data)
        if (!std::isfinite(v)) throw DataError("PCA input has a non-finite value");

    PcaModel model;
    model.input_width = d;
    model.fingerprint = fingerprint_rows(rows);
    model.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) model.mean[j] += rows(i, j);
    for (double& m : model.mean) m /= static_cast<double>(n);

    Eigen::MatrixXd centered(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows(i, j) - model.mean[j];

    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double total = s.squaredNorm();
    if (!(total > 0.0)) throw DataError("PCA input has zero variance");

    const std::size_t limit = std::min<std::size_t>(d, n - 1);
    std::size_t k = 0;
    if (d > n) {
        k = std::min({cap, d, n - 1});
    } else {
        double cumulative = 0.0;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            cumulative += s(i) * s(i) / total;
            ++k;
            if (cumulative >= kPcaVarianceTarget) break;
        }
        k = std::min({k, limit, cap});
    }
    if (k == 0) throw DataError("PCA selected zero components");

    const Eigen::MatrixXd& v = svd.matrixV();
    model.components = Matrix(k, d);
    model.explained_ratio.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        const auto col = v.col(static_cast<Eigen::Index>(c));
        Eigen::Index arg = 0;
        col.cwiseAbs().maxCoeff(&arg);
        const double flip = col(arg) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < d; ++j) model.components(c, j) = flip * col(static_cast<Eigen::Index>(j));
        const double sc = s(static_cast<Eigen::Index>(c));
        model.explained_ratio[c] = sc * sc / total;
    }
    return model;
}

std::vector<double> pca_transform(const PcaModel& model, std::span<const double> row) {
    if (row.size() != model.input_width)
        throw DataError("PCA input width " + std::to_string(row.size()) + " does not match model width " +
                        std::to_string(model.input_width));
    std::vector<double> centered(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) centered[j] = row[j] - model.mean[j];
    std::vector<double> out(model.k(), 0.0);
    for (std::size_t c = 0; c < model.k(); ++c) {
        auto comp = model.components.row(c);
        double acc = 0.0;
        for (std::size_t j = 0; j < centered.size(); ++j) acc += comp[j] * centered[j];
        out[c] = acc;
    }
    return out;
}

Matrix pca_transform(const PcaModel& model, const Matrix& rows) {
    Matrix out(rows.rows, model.k());
    for (std::size_t i = 0; i < rows.rows; ++i) {
        auto p = pca_transform(model, rows.row(i));
        std::copy(p.begin(), p.end(), out.row(i).begin());
    }
    return out;
}

std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> projection) {
    if (projection.size() != model.k()) throw DataError("projection width does not match PCA component count");
    std::vector<double> out = model.mean;
    for (std::size_t c = 0; c < model.k(); ++c) {
        auto comp = model.components.row(c);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += projection[c] * comp[j];
    }
    return out;
}

namespace {
void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}
}  // namespace

void save_pca(const PcaModel& model, const std::filesystem::path& blob, const std::filesystem::path& descriptor) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(8 * (model.mean.size() + model.components.data.size() + model.explained_ratio.size()));
    for (double v : model.mean) put_f64(bytes, v);
    for (double v : model.components.data) put_f64(bytes, v);
    for (double v : model.explained_ratio) put_f64(bytes, v);
    write_binary_file(blob, bytes);
    nlohmann::ordered_json j;
    j["k"] = model.k();
    j["D"] = model.input_width;
    j["fingerprint"] = model.fingerprint;
    j["blob_digest"] = Fnv1a{}.update(bytes.data(), bytes.size()).hex();
    write_text_file(descriptor, j.dump() + "\n");
}

PcaModel load_pca(const std::filesystem::path& blob, const std::filesystem::path& descriptor) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(descriptor));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed PCA descriptor: ") + e.what());
    }
    PcaModel m;
    const std::size_t k = j.at("k").get<std::size_t>();
    m.input_width = j.at("D").get<std::size_t>();
    m.fingerprint = j.at("fingerprint").get<std::string>();
    auto bytes = read_binary_file(blob);
    const std::size_t expected = 8 * (m.input_width + k * m.input_width + k);
    if (bytes.size() != expected) throw DataError("PCA blob size does not match its descriptor");
    const std::uint8_t* p = bytes.data();
    m.mean.resize(m.input_width);
    for (double& v : m.mean) v = get_f64(p), p += 8;
    m.components = Matrix(k, m.input_width);
    for (double& v : m.components.data) v = get_f64(p), p += 8;
    m.explained_ratio.resize(k);
    for (double& v : m.explained_ratio) v = get_f64(p), p += 8;
    return m;
}

}  // namespace lootwatch
