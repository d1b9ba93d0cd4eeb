#include "m2iosr/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "m2iosr/config.hpp"
#include "m2iosr/errors.hpp"

using nlohmann::json;

namespace m2iosr {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        out.push_back(cell);
    }
    return out;
}

} // namespace

std::string loss_csv(std::span<const LossBreakdown> history) {
    std::ostringstream out;
    out << "epoch,iteration";
    for (const auto& f : LossBreakdown::field_names()) out << ',' << f;
    out << '\n';
    for (const auto& b : history) {
        out << b.epoch << ',' << b.iteration;
        for (double v : b.values()) out << ',' << num(v);
        out << '\n';
    }
    return out.str();
}

std::string centers_csv(const torch::Tensor& centers) {
    auto c = centers.detach().to(torch::kFloat64).contiguous();
    std::ostringstream out;
    out << "class";
    for (std::int64_t j = 0; j < c.size(1); ++j) out << ",c" << j;
    out << '\n';
    auto a = c.accessor<double, 2>();
    for (std::int64_t k = 0; k < c.size(0); ++k) {
        out << k;
        for (std::int64_t j = 0; j < c.size(1); ++j) out << ',' << num(a[k][j]);
        out << '\n';
    }
    return out.str();
}

std::string predictions_csv(std::span<const OpenSetPrediction> predictions) {
    std::ostringstream out;
    out << "sample_id,predicted_label,confidence\n";
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        out << i << ',';
        if (predictions[i].label == kUnknownLabel) {
            out << "unknown";
        } else {
            out << predictions[i].label;
        }
        out << ',' << num(predictions[i].confidence) << '\n';
    }
    return out.str();
}

std::string eval_report_json(const EvalReport& report, const SplitSpec& split, double tau) {
    json f1 = json::object();
    for (std::size_t c = 0; c < report.per_class_f1.size(); ++c) {
        const std::string key = static_cast<int>(c) == report.num_known ? "unknown" : std::to_string(c);
        f1[key] = report.per_class_f1[c] ? json(*report.per_class_f1[c]) : json(nullptr);
    }
    const auto n_known = report.n_samples - report.n_unknown;
    json j{{"per_class_f1", f1},
           {"macro_f1", report.macro_f1},
           {"confusion", report.confusion},
           {"openness", report.openness},
           {"n_samples", report.n_samples},
           {"n_known_samples", n_known},
           {"n_unknown_samples", report.n_unknown},
           {"known_to_unknown_ratio", report.n_unknown > 0 ? json(static_cast<double>(n_known) / report.n_unknown)
                                                            : json(nullptr)},
           {"tau", tau},
           {"split", json::parse(to_json(split))},
           {"split_hash", split_hash(split)}};
    return j.dump(2) + "\n";
}

std::string sweep_csv(std::span<const SweepPoint> curve) {
    std::ostringstream out;
    out << "unknown_classes,openness,macro_f1,unknown_ratio\n";
    for (const auto& p : curve) {
        out << p.unknown_classes << ',' << num(p.openness) << ',' << num(p.macro_f1) << ',' << num(p.unknown_ratio)
            << '\n';
    }
    return out.str();
}

std::string ablation_csv(std::span<const AblationRow> rows) {
    std::ostringstream out;
    out << "baseline_id,seed,openness,macro_f1,closed_set_accuracy,unknown_classes,split_hash\n";
    for (const auto& r : rows) {
        out << r.baseline << ',' << r.seed << ',' << num(r.openness) << ',' << num(r.macro_f1) << ','
            << num(r.closed_set_accuracy) << ',' << r.unknown_classes << ',' << r.split_hash << '\n';
    }
    return out.str();
}

std::vector<CurveSeries> read_curve_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV " + path.string());
    const auto header = split_csv_line(line);
    auto column = [&](const std::string& name) -> int {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    };
    const int x_col = column("openness");
    const int y_col = column("macro_f1");
    const int s_col = column("baseline_id");
    if (x_col < 0 || y_col < 0) throw DataError(path.string() + " lacks openness/macro_f1 columns");

    // series name -> openness -> (sum, count), in first-seen series order
    std::vector<std::string> order;
    std::map<std::string, std::map<double, std::pair<double, int>>> acc;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (static_cast<int>(cells.size()) <= std::max({x_col, y_col, s_col})) {
            throw DataError("short row in " + path.string() + ": " + line);
        }
        const std::string name = s_col >= 0 ? cells[s_col] : "macro-F1";
        if (!acc.count(name)) order.push_back(name);
        auto& slot = acc[name][std::stod(cells[x_col])];
        slot.first += std::stod(cells[y_col]);
        slot.second += 1;
    }
    std::vector<CurveSeries> series;
    for (const auto& name : order) {
        CurveSeries s{name, {}};
        for (const auto& [x, sc] : acc[name]) s.points.emplace_back(x, sc.first / sc.second);
        series.push_back(std::move(s));
    }
    return series;
}

} // namespace m2iosr
