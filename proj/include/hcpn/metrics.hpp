#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hcpn/io.hpp"
#include "hcpn/mask.hpp"

namespace hcpn {

// Intersection over union; 1 when both masks are empty.
double region_similarity(const BinaryMask& pred, const BinaryMask& gt);

// Foreground pixels 4-adjacent to background or to the image edge.
BinaryMask boundary_pixels(const BinaryMask& m);

// ceil(0.8% of the image diagonal).
std::size_t default_boundary_tolerance(std::size_t height, std::size_t width);

// Boundary F-measure: a boundary pixel counts as matched when a boundary
// pixel of the other mask lies within Euclidean distance `tol`.
double boundary_measure(const BinaryMask& pred, const BinaryMask& gt, std::optional<std::size_t> tol = std::nullopt);

// Mean over consecutive pairs of 1 - J(warp(mask_t, flow_t), mask_{t+1}).
double temporal_stability(const std::vector<BinaryMask>& masks, const std::vector<FlowField>& flows);

struct Summary {
    double mean = 0;
    double recall = 0;  // fraction of frames scoring above 0.5
    double decay = 0;   // mean of the first quarter minus mean of the last
};

// Quarter size is max(1, n/4) frames.
Summary summarize(const std::vector<double>& per_frame);

struct SequenceEval {
    std::string name;
    std::vector<std::string> attributes;
    std::vector<double> j;
    std::vector<double> f;
    Summary j_summary;
    Summary f_summary;
    double t = 0;
};

SequenceEval evaluate_sequence(const std::string& name, const std::vector<BinaryMask>& preds,
                               const std::vector<BinaryMask>& gts, const std::vector<FlowField>& flows,
                               const std::vector<std::string>& attributes = {});

struct Aggregate {
    std::size_t sequences = 0;
    std::size_t frames = 0;
    Summary j;
    Summary f;
    double t = 0;
};

// Sequence-level averages of every statistic.
Aggregate aggregate(const std::vector<SequenceEval>& evals);

// Per attribute tag: mean J and mean F averaged over sequences carrying it.
std::map<std::string, std::pair<double, double>> attribute_means(const std::vector<SequenceEval>& evals);

// Rows "seq,frame,J,F", one per evaluated frame, after a header line.
void write_frame_csv(const std::filesystem::path& path, const std::vector<SequenceEval>& evals);
void write_summary_markdown(const std::filesystem::path& path, const std::vector<SequenceEval>& evals);
void write_attribute_markdown(const std::filesystem::path& path, const std::vector<SequenceEval>& evals);
void write_j_plot_svg(const std::filesystem::path& path, const std::vector<SequenceEval>& evals);

}  // namespace hcpn
