#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchbag/common.hpp"

namespace patchbag {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// One labeled polygon in level-0 slide pixels.
struct PolygonAnnotation {
  std::string slide_id;
  std::string region_id;
  ClassLabel label = ClassLabel::Benign;
  std::vector<Point> vertices;
  /// False when the outline self-intersects. Such polygons are still
  /// rasterized (nonzero winding) but callers may choose to drop them.
  bool simple = true;
};

/// Parses an annotation document:
///
///   <Annotations slide="slide_01">
///     <Region id="r1" label="Benign">
///       <Vertex x="10" y="20"/> ...
///     </Region>
///   </Annotations>
///
/// Element and attribute names are matched case-insensitively. Vertices may
/// also be wrapped in a <Vertices> element. Only Benign, InSitu and Invasive
/// labels are accepted; Normal tissue is sampled, never annotated.
std::vector<PolygonAnnotation> parse_annotations(const std::filesystem::path& path);
std::vector<PolygonAnnotation> parse_annotations_text(std::string_view document,
                                                      std::string_view default_slide_id);

/// Serializes annotations in the format parse_annotations reads.
std::string format_annotations(std::string_view slide_id,
                               std::span<const PolygonAnnotation> annotations);

bool is_simple_polygon(std::span<const Point> vertices);

/// Signed area via the shoelace formula (positive for counter-clockwise in a
/// y-up frame).
double polygon_area(std::span<const Point> vertices);

}  // namespace patchbag
