#include "actdiff/svg.hpp"

#include <sstream>

#include "actdiff/ioutil.hpp"
#include "actdiff/metrics.hpp"

namespace actdiff {

namespace {

std::string class_color(int cls, std::size_t num_classes) {
  const int hue = static_cast<int>(360.0 * static_cast<double>(cls) /
                                   static_cast<double>(std::max<std::size_t>(1, num_classes)));
  std::ostringstream os;
  os << "hsl(" << hue << ",70%,50%)";
  return os.str();
}

void draw_row(std::ostringstream& os, const std::vector<int>& labels, double y, double px_per_frame,
              double row_h, std::size_t num_classes, const std::string& name) {
  os << "<text x=\"2\" y=\"" << y + row_h * 0.65 << "\" font-size=\"12\" font-family=\"sans-serif\">"
     << name << "</text>\n";
  for (const Segment& s : extract_segments(labels)) {
    os << "<rect x=\"" << 50.0 + px_per_frame * static_cast<double>(s.start) << "\" y=\"" << y
       << "\" width=\"" << px_per_frame * static_cast<double>(s.end - s.start) << "\" height=\""
       << row_h << "\" fill=\"" << class_color(s.cls, num_classes) << "\"/>\n";
  }
}

}  // namespace

std::string barcode_svg(const std::vector<int>& gt, const std::vector<int>& tas,
                        const std::vector<int>& lta, std::size_t n_obs, std::size_t num_classes,
                        const std::string& title) {
  const std::size_t max_len = std::max({gt.size(), tas.size(), lta.size(), std::size_t(1)});
  const double width = 640.0, label_w = 50.0, row_h = 28.0, gap = 8.0;
  const double px = (width - label_w) / static_cast<double>(max_len);
  const double height = 3 * row_h + 2 * gap + 40.0;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<text x=\"2\" y=\"14\" font-size=\"13\" font-family=\"sans-serif\">" << title
     << "</text>\n";
  double y = 24.0;
  draw_row(os, gt, y, px, row_h, num_classes, "GT");
  y += row_h + gap;
  draw_row(os, tas, y, px, row_h, num_classes, "TAS");
  y += row_h + gap;
  draw_row(os, lta, y, px, row_h, num_classes, "LTA");
  const double divider_x = label_w + px * static_cast<double>(n_obs);
  os << "<line x1=\"" << divider_x << "\" y1=\"20\" x2=\"" << divider_x << "\" y2=\"" << height - 4
     << "\" stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"4,3\"/>\n";
  os << "</svg>\n";
  return os.str();
}

void write_barcode_svg(const std::string& path, const std::vector<int>& gt,
                       const std::vector<int>& tas, const std::vector<int>& lta, std::size_t n_obs,
                       std::size_t num_classes, const std::string& title) {
  write_file_bytes(path, barcode_svg(gt, tas, lta, n_obs, num_classes, title));
}

}  // namespace actdiff
