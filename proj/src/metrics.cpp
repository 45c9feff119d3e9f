// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace bmae {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size())
        throw IoError("malformed number in report: " + s);
    return v;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << text;
    if (!out)
        throw IoError("write failed for " + path.string());
}

double task_weight(const MetricsLedger& ledger, int k) {
    return ledger.test_counts.empty() ? 1.0 : static_cast<double>(ledger.test_counts.at(k));
}

/// Minimal RGB raster for the accuracy-evolution chart.
class Canvas {
public:
    Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 255) {}

    void set(int x, int y, std::array<std::uint8_t, 3> c) {
        if (x < 0 || y < 0 || x >= w_ || y >= h_)
            return;
        auto* p = &px_[(static_cast<std::size_t>(y) * w_ + x) * 3];
        p[0] = c[0], p[1] = c[1], p[2] = c[2];
    }

    void line(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c, int thick = 1) {
        const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            for (int ox = -thick / 2; ox <= thick / 2; ++ox)
                for (int oy = -thick / 2; oy <= thick / 2; ++oy)
                    set(x0 + ox, y0 + oy, c);
            if (x0 == x1 && y0 == y1)
                break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    std::string ppm() const {
        std::string out = "P6\n" + std::to_string(w_) + " " + std::to_string(h_) + "\n255\n";
        out.append(px_.begin(), px_.end());
        return out;
    }

private:
    int w_, h_;
    std::vector<std::uint8_t> px_;
};

std::string render_plot(const MetricsLedger& ledger) {
    constexpr int kW = 640, kH = 400, kLeft = 50, kRight = 20, kTop = 20, kBottom = 40;
    Canvas canvas(kW, kH);
    const std::array<std::uint8_t, 3> axis{0, 0, 0}, grid{220, 220, 220}, overall{200, 30, 30};
    const int plot_w = kW - kLeft - kRight;
    const int plot_h = kH - kTop - kBottom;
    for (int i = 0; i <= 10; ++i) {
        const int y = kTop + plot_h - plot_h * i / 10;
        canvas.line(kLeft, y, kW - kRight, y, grid);
    }
    canvas.line(kLeft, kTop, kLeft, kTop + plot_h, axis);
    canvas.line(kLeft, kTop + plot_h, kW - kRight, kTop + plot_h, axis);

    const int phases = ledger.phases();
    auto px = [&](int t) { return phases <= 1 ? kLeft + plot_w / 2 : kLeft + plot_w * t / (phases - 1); };
    auto py = [&](double a) { return kTop + plot_h - static_cast<int>(std::lround(a * plot_h)); };
    for (int k = 0; k < phases; ++k) {
        const auto shade = static_cast<std::uint8_t>(60 + 150 * k / std::max(1, phases));
        const std::array<std::uint8_t, 3> c{shade, shade, 255};
        for (int t = k + 1; t < phases; ++t)
            canvas.line(px(t - 1), py(ledger.acc[t - 1][k]), px(t), py(ledger.acc[t][k]), c);
    }
    for (int t = 0; t < phases; ++t) {
        const double a = phase_accuracy(ledger, t);
        if (t > 0)
            canvas.line(px(t - 1), py(phase_accuracy(ledger, t - 1)), px(t), py(a), overall, 3);
        for (int o = -3; o <= 3; ++o)
            canvas.line(px(t) - 3, py(a) + o, px(t) + 3, py(a) + o, overall);
    }
    return canvas.ppm();
}

} // namespace

void MetricsLedger::validate() const {
    if (acc.empty())
        throw InvalidArgument("ledger has no phases");
    for (std::size_t t = 0; t < acc.size(); ++t) {
        if (acc[t].size() != t + 1)
            throw InvalidArgument("ledger row " + std::to_string(t) + " is incomplete");
        for (double a : acc[t])
            if (!(a >= 0.0 && a <= 1.0))
                throw InvalidArgument("ledger accuracy outside [0, 1]");
    }
    if (!test_counts.empty() && test_counts.size() < acc.size())
        throw InvalidArgument("ledger is missing per-task test counts");
}

double phase_accuracy(const MetricsLedger& ledger, int t) {
    ledger.validate();
    double num = 0.0;
    double den = 0.0;
    for (int k = 0; k <= t; ++k) {
        const double w = task_weight(ledger, k);
        num += w * ledger.acc.at(t)[k];
        den += w;
    }
    return den > 0 ? num / den : 0.0;
}

double avg_accuracy(const MetricsLedger& ledger) {
    ledger.validate();
    double sum = 0.0;
    for (int t = 0; t < ledger.phases(); ++t)
        sum += phase_accuracy(ledger, t);
    return sum / ledger.phases();
}

double last_accuracy(const MetricsLedger& ledger) {
    ledger.validate();
    return phase_accuracy(ledger, ledger.phases() - 1);
}

double forgetting(const MetricsLedger& ledger) {
    ledger.validate();
    const int last = ledger.phases() - 1;
    if (last == 0)
        return 0.0;
    double sum = 0.0;
    for (int k = 0; k < last; ++k) {
        double best = ledger.acc[k][k];
        for (int t = k + 1; t <= last; ++t)
            best = std::max(best, ledger.acc[t][k]);
        sum += best - ledger.acc[last][k];
    }
    return sum / last;
}

double feature_density(const std::vector<std::vector<double>>& features, const std::vector<int>& labels) {
    if (features.size() != labels.size())
        throw InvalidArgument("feature_density: features and labels differ in count");
    std::map<int, int> per_class;
    for (int l : labels)
        ++per_class[l];
    if (per_class.size() < 2)
        throw InvalidArgument("feature_density needs at least two classes");
    for (const auto& [cls, n] : per_class)
        if (n < 2)
            throw InvalidArgument("feature_density needs at least two samples per class");

    std::vector<std::vector<double>> unit;
    unit.reserve(features.size());
    for (const auto& f : features) {
        double norm = 0.0;
        for (double v : f)
            norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0)
            throw InvalidArgument("feature_density: zero-vector feature");
        std::vector<double> u(f);
        for (double& v : u)
            v /= norm;
        unit.push_back(std::move(u));
    }
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < unit.size(); ++i)
        for (std::size_t j = i + 1; j < unit.size(); ++j) {
            double cos = 0.0;
            for (std::size_t d = 0; d < unit[i].size(); ++d)
                cos += unit[i][d] * unit[j][d];
            if (labels[i] == labels[j]) {
                intra += cos;
                ++n_intra;
            } else {
                inter += cos;
                ++n_inter;
            }
        }
    const double pi_intra = intra / static_cast<double>(n_intra);
    const double pi_inter = inter / static_cast<double>(n_inter);
    if (pi_inter == 0.0)
        throw InvalidArgument("feature_density: between-class similarity is zero");
    return pi_intra / pi_inter;
}

void emit_reports(const MetricsLedger& ledger, const std::filesystem::path& dir) {
    ledger.validate();
    std::filesystem::create_directories(dir);

    std::string matrix = "after_task,eval_task,accuracy,test_count\n";
    for (int t = 0; t < ledger.phases(); ++t)
        for (int k = 0; k <= t; ++k)
            matrix += std::to_string(t) + "," + std::to_string(k) + "," + fmt(ledger.acc[t][k]) + "," +
                      std::to_string(ledger.test_counts.empty() ? 0 : ledger.test_counts[k]) + "\n";
    write_text(dir / "accuracy_matrix.csv", matrix);

    std::string phases = "after_task,phase_accuracy,replay_mse,wall_seconds\n";
    for (int t = 0; t < ledger.phases(); ++t) {
        const std::size_t ut = static_cast<std::size_t>(t);
        phases += std::to_string(t) + "," + fmt(phase_accuracy(ledger, t)) + "," +
                  (ut < ledger.replay_mse.size() ? fmt(ledger.replay_mse[ut]) : std::string("")) + "," +
                  (ut < ledger.wall_seconds.size() ? fmt(ledger.wall_seconds[ut]) : std::string("")) + "\n";
    }
    write_text(dir / "phase_metrics.csv", phases);

    std::string metrics = "avg,last,forgetting,feature_density\n";
    metrics += fmt(avg_accuracy(ledger)) + "," + fmt(last_accuracy(ledger)) + "," + fmt(forgetting(ledger)) + "," +
               (ledger.feature_density ? fmt(*ledger.feature_density) : std::string("")) + "\n";
    write_text(dir / "metrics.csv", metrics);

    std::string losses = "step,task,cls,rec,det,total\n";
    for (const auto& s : ledger.steps)
        losses += std::to_string(s.step) + "," + std::to_string(s.task) + "," + fmt(s.loss.cls) + "," +
                  fmt(s.loss.rec) + "," + fmt(s.loss.det) + "," + fmt(s.loss.total) + "\n";
    write_text(dir / "losses.csv", losses);

    write_text(dir / "accuracy.ppm", render_plot(ledger));
}

MetricsLedger load_reports(const std::filesystem::path& dir) {
    MetricsLedger ledger;
    std::map<int, std::size_t> counts;
    for (const auto& row : read_csv(dir / "accuracy_matrix.csv")) {
        if (row.size() != 4)
            throw IoError("malformed accuracy_matrix.csv row");
        const int t = std::stoi(row[0]);
        const int k = std::stoi(row[1]);
        if (t < 0 || k < 0 || k > t)
            throw IoError("accuracy_matrix.csv entry outside the lower triangle");
        if (static_cast<int>(ledger.acc.size()) <= t)
            ledger.acc.resize(t + 1);
        if (static_cast<int>(ledger.acc[t].size()) != k)
            throw IoError("accuracy_matrix.csv rows are out of order");
        ledger.acc[t].push_back(parse_double(row[2]));
        counts[k] = std::stoull(row[3]);
    }
    bool any_count = false;
    for (const auto& [k, n] : counts)
        any_count = any_count || n != 0;
    if (any_count)
        for (const auto& [k, n] : counts)
            ledger.test_counts.push_back(n);

    for (const auto& row : read_csv(dir / "phase_metrics.csv")) {
        if (row.size() >= 3 && !row[2].empty())
            ledger.replay_mse.push_back(parse_double(row[2]));
        if (row.size() >= 4 && !row[3].empty())
            ledger.wall_seconds.push_back(parse_double(row[3]));
    }
    const auto summary = read_csv(dir / "metrics.csv");
    if (!summary.empty() && summary[0].size() >= 4 && !summary[0][3].empty())
        ledger.feature_density = parse_double(summary[0][3]);
    if (std::filesystem::exists(dir / "losses.csv"))
        for (const auto& row : read_csv(dir / "losses.csv")) {
            if (row.size() != 6)
                throw IoError("malformed losses.csv row");
            StepRecord s;
            s.step = std::stoull(row[0]);
            s.task = std::stoi(row[1]);
            s.loss = {parse_double(row[2]), parse_double(row[3]), parse_double(row[4]), parse_double(row[5])};
            ledger.steps.push_back(s);
        }
    ledger.validate();
    return ledger;
}

} // namespace bmae
