#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace actdiff {

// Barcode plot for one video: a GT row, a TAS row, and an LTA row, one
// colored rectangle per segment, with a vertical divider at the observation
// boundary.
std::string barcode_svg(const std::vector<int>& gt, const std::vector<int>& tas,
                        const std::vector<int>& lta, std::size_t n_obs, std::size_t num_classes,
                        const std::string& title);

void write_barcode_svg(const std::string& path, const std::vector<int>& gt,
                       const std::vector<int>& tas, const std::vector<int>& lta, std::size_t n_obs,
                       std::size_t num_classes, const std::string& title);

}  // namespace actdiff
