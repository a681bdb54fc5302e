#include "hcpn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hcpn/flow.hpp"

namespace hcpn {
namespace {

void require_same(const BinaryMask& a, const BinaryMask& b, const char* op) {
    if (a.height != b.height || a.width != b.width) {
        throw DimensionError(std::string(op) + ": masks " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                             " and " + std::to_string(b.height) + "x" + std::to_string(b.width) + " differ");
    }
}

// Pixels of `from` that have a pixel of `to` within distance tol.
std::size_t matched(const BinaryMask& from, const BinaryMask& to, std::size_t tol) {
    const auto h = static_cast<long>(from.height), w = static_cast<long>(from.width), r = static_cast<long>(tol);
    std::vector<std::pair<long, long>> disc;
    for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx)
            if (dx * dx + dy * dy <= r * r) disc.emplace_back(dy, dx);
    std::size_t n = 0;
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            if (!from.at(y, x)) continue;
            for (const auto& [dy, dx] : disc) {
                const long yy = y + dy, xx = x + dx;
                if (yy >= 0 && yy < h && xx >= 0 && xx < w && to.at(yy, xx)) {
                    ++n;
                    break;
                }
            }
        }
    }
    return n;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

double region_similarity(const BinaryMask& pred, const BinaryMask& gt) {
    require_same(pred, gt, "region_similarity");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
        inter += a && b;
        uni += a || b;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask boundary_pixels(const BinaryMask& m) {
    BinaryMask out(m.height, m.width);
    for (std::size_t y = 0; y < m.height; ++y) {
        for (std::size_t x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            const bool edge = y == 0 || x == 0 || y + 1 == m.height || x + 1 == m.width;
            if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1)) out.at(y, x) = 1;
        }
    }
    return out;
}

std::size_t default_boundary_tolerance(std::size_t height, std::size_t width) {
    const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
    return static_cast<std::size_t>(std::ceil(0.008 * diag));
}

double boundary_measure(const BinaryMask& pred, const BinaryMask& gt, std::optional<std::size_t> tol) {
    require_same(pred, gt, "boundary_measure");
    const std::size_t r = tol.value_or(default_boundary_tolerance(gt.height, gt.width));
    const BinaryMask bp = boundary_pixels(pred), bg = boundary_pixels(gt);
    const std::size_t np = bp.count(), ng = bg.count();
    if (np == 0 && ng == 0) return 1.0;
    if (np == 0 || ng == 0) return 0.0;
    const double precision = static_cast<double>(matched(bp, bg, r)) / static_cast<double>(np);
    const double recall = static_cast<double>(matched(bg, bp, r)) / static_cast<double>(ng);
    return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

double temporal_stability(const std::vector<BinaryMask>& masks, const std::vector<FlowField>& flows) {
    if (masks.empty()) throw ContractError("temporal_stability needs at least one mask");
    if (flows.size() + 1 != masks.size()) {
        throw ContractError("temporal_stability: " + std::to_string(masks.size()) + " masks need " +
                            std::to_string(masks.size() - 1) + " flows, got " + std::to_string(flows.size()));
    }
    if (flows.empty()) return 0.0;
    double acc = 0;
    for (std::size_t t = 0; t < flows.size(); ++t) acc += 1.0 - region_similarity(warp_mask(masks[t], flows[t]), masks[t + 1]);
    return acc / static_cast<double>(flows.size());
}

Summary summarize(const std::vector<double>& v) {
    if (v.empty()) throw ContractError("cannot summarise an empty sequence");
    const auto n = v.size();
    Summary s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    s.recall = static_cast<double>(std::count_if(v.begin(), v.end(), [](double x) { return x > 0.5; })) /
               static_cast<double>(n);
    const std::size_t q = std::max<std::size_t>(1, n / 4);
    const double first = std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(q), 0.0) / static_cast<double>(q);
    const double last = std::accumulate(v.end() - static_cast<std::ptrdiff_t>(q), v.end(), 0.0) / static_cast<double>(q);
    s.decay = first - last;
    return s;
}

SequenceEval evaluate_sequence(const std::string& name, const std::vector<BinaryMask>& preds,
                               const std::vector<BinaryMask>& gts, const std::vector<FlowField>& flows,
                               const std::vector<std::string>& attributes) {
    if (preds.empty()) throw ContractError("evaluate_sequence: empty sequence " + name);
    if (preds.size() != gts.size()) {
        throw ContractError("evaluate_sequence: " + std::to_string(preds.size()) + " predictions vs " +
                            std::to_string(gts.size()) + " ground-truth masks in " + name);
    }
    SequenceEval e;
    e.name = name;
    e.attributes = attributes;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        e.j.push_back(region_similarity(preds[i], gts[i]));
        e.f.push_back(boundary_measure(preds[i], gts[i]));
    }
    e.j_summary = summarize(e.j);
    e.f_summary = summarize(e.f);
    e.t = temporal_stability(preds, flows);
    return e;
}

Aggregate aggregate(const std::vector<SequenceEval>& evals) {
    Aggregate a;
    a.sequences = evals.size();
    if (evals.empty()) return a;
    const double n = static_cast<double>(evals.size());
    for (const auto& e : evals) {
        a.frames += e.j.size();
        a.j.mean += e.j_summary.mean / n;
        a.j.recall += e.j_summary.recall / n;
        a.j.decay += e.j_summary.decay / n;
        a.f.mean += e.f_summary.mean / n;
        a.f.recall += e.f_summary.recall / n;
        a.f.decay += e.f_summary.decay / n;
        a.t += e.t / n;
    }
    return a;
}

std::map<std::string, std::pair<double, double>> attribute_means(const std::vector<SequenceEval>& evals) {
    std::map<std::string, std::pair<double, double>> sums;
    std::map<std::string, int> counts;
    for (const auto& e : evals) {
        for (const auto& tag : e.attributes) {
            sums[tag].first += e.j_summary.mean;
            sums[tag].second += e.f_summary.mean;
            ++counts[tag];
        }
    }
    for (auto& [tag, v] : sums) {
        v.first /= counts[tag];
        v.second /= counts[tag];
    }
    return sums;
}

void write_frame_csv(const std::filesystem::path& path, const std::vector<SequenceEval>& evals) {
    std::ostringstream out;
    out << "seq,frame,J,F\n";
    for (const auto& e : evals) {
        for (std::size_t i = 0; i < e.j.size(); ++i) out << e.name << ',' << i << ',' << fmt(e.j[i]) << ',' << fmt(e.f[i]) << '\n';
    }
    write_file(path, out.str());
}

void write_summary_markdown(const std::filesystem::path& path, const std::vector<SequenceEval>& evals) {
    std::ostringstream out;
    out << "| Sequence | J Mean | J Recall | J Decay | F Mean | F Recall | F Decay | T Mean |\n"
        << "|---|---|---|---|---|---|---|---|\n";
    auto row = [&](const std::string& name, const Summary& j, const Summary& f, double t) {
        out << "| " << name << " | " << fmt(j.mean) << " | " << fmt(j.recall) << " | " << fmt(j.decay) << " | "
            << fmt(f.mean) << " | " << fmt(f.recall) << " | " << fmt(f.decay) << " | " << fmt(t) << " |\n";
    };
    for (const auto& e : evals) row(e.name, e.j_summary, e.f_summary, e.t);
    const Aggregate a = aggregate(evals);
    row("**mean**", a.j, a.f, a.t);
    write_file(path, out.str());
}

void write_attribute_markdown(const std::filesystem::path& path, const std::vector<SequenceEval>& evals) {
    std::ostringstream out;
    out << "| Attribute | J Mean | F Mean |\n|---|---|---|\n";
    for (const auto& [tag, v] : attribute_means(evals)) out << "| " << tag << " | " << fmt(v.first) << " | " << fmt(v.second) << " |\n";
    write_file(path, out.str());
}

void write_j_plot_svg(const std::filesystem::path& path, const std::vector<SequenceEval>& evals) {
    constexpr double kW = 640, kH = 320, kPad = 40;
    std::size_t longest = 2;
    for (const auto& e : evals) longest = std::max(longest, e.j.size());
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\"" << kH - kPad
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << kPad / 4 << "\" y=\"" << kPad << "\" font-size=\"12\">J</text>\n";
    static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    for (std::size_t s = 0; s < evals.size(); ++s) {
        out << "<polyline fill=\"none\" stroke=\"" << kColors[s % 6] << "\" points=\"";
        for (std::size_t i = 0; i < evals[s].j.size(); ++i) {
            const double x = kPad + (kW - 2 * kPad) * static_cast<double>(i) / static_cast<double>(longest - 1);
            const double y = kH - kPad - (kH - 2 * kPad) * evals[s].j[i];
            out << x << ',' << y << ' ';
        }
        out << "\"><title>" << evals[s].name << "</title></polyline>\n";
    }
    out << "</svg>\n";
    write_file(path, out.str());
}

}  // namespace hcpn
