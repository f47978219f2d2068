#include "patchbag/annotations.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "patchbag/binary_io.hpp"

namespace patchbag {
namespace {

namespace pt = boost::property_tree;

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && to_lower(a) == to_lower(b);
}

const std::string* find_attr(const pt::ptree& node, std::string_view name) {
  auto attrs = node.get_child_optional("<xmlattr>");
  if (!attrs) return nullptr;
  for (const auto& [key, value] : *attrs) {
    if (iequals(key, name)) return &value.data();
  }
  return nullptr;
}

double parse_coordinate(const std::string& text, std::string_view what,
                        const std::string& context) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && std::isspace(static_cast<unsigned char>(*first))) ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr == first || !std::isfinite(v)) {
    throw Error(ErrorCode::ParseError, context + ": attribute '" +
                                           std::string(what) +
                                           "' is not a number: '" + text + "'");
  }
  return v;
}

void collect_vertices(const pt::ptree& node, std::vector<Point>& out,
                      const std::string& context) {
  for (const auto& [name, child] : node) {
    if (iequals(name, "vertex")) {
      const std::string where =
          context + " <Vertex> #" + std::to_string(out.size());
      const std::string* x = find_attr(child, "x");
      const std::string* y = find_attr(child, "y");
      if (!x || !y) {
        throw Error(ErrorCode::ParseError, where + ": missing x or y attribute");
      }
      Point p{parse_coordinate(*x, "x", where), parse_coordinate(*y, "y", where)};
      if (p.x < 0.0 || p.y < 0.0) {
        throw Error(ErrorCode::ParseError, where + ": negative coordinate");
      }
      out.push_back(p);
    } else if (iequals(name, "vertices")) {
      collect_vertices(child, out, context);
    }
  }
}

void collect_regions(const pt::ptree& node, const std::string& slide_id,
                     std::vector<PolygonAnnotation>& out) {
  for (const auto& [name, child] : node) {
    if (name == "<xmlattr>" || name == "<xmlcomment>") continue;
    if (!iequals(name, "region")) {
      collect_regions(child, slide_id, out);
      continue;
    }
    const std::size_t index = out.size();
    std::string context = "<Region> #" + std::to_string(index);
    PolygonAnnotation ann;
    ann.slide_id = slide_id;
    if (const std::string* id = find_attr(child, "id"); id && !id->empty()) {
      ann.region_id = slide_id + "_" + *id;
    } else {
      std::ostringstream rid;
      rid << slide_id << "_r" << index;
      ann.region_id = rid.str();
    }
    context += " (" + ann.region_id + ")";

    const std::string* label = find_attr(child, "label");
    if (!label) label = find_attr(child, "text");
    if (!label) {
      throw Error(ErrorCode::ParseError, context + ": missing label attribute");
    }
    const auto parsed = parse_label(*label);
    if (!parsed || *parsed == ClassLabel::Normal) {
      throw Error(ErrorCode::InvalidLabel,
                  context + ": unsupported label '" + *label +
                      "' (expected Benign, InSitu or Invasive)");
    }
    ann.label = *parsed;
    collect_vertices(child, ann.vertices, context);
    if (ann.vertices.size() < 3) {
      throw Error(ErrorCode::DegenerateGeometry,
                  context + ": polygon has " + std::to_string(ann.vertices.size()) +
                      " vertices, need at least 3");
    }
    ann.simple = is_simple_polygon(ann.vertices);
    out.push_back(std::move(ann));
  }
}

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const Point& p, const Point& q, const Point& r) {
  return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) &&
         std::min(p.y, r.y) <= q.y && q.y <= std::max(p.y, r.y);
}

bool segments_intersect(const Point& a, const Point& b, const Point& c,
                        const Point& d) {
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  if (d1 == 0 && on_segment(c, a, d)) return true;
  if (d2 == 0 && on_segment(c, b, d)) return true;
  if (d3 == 0 && on_segment(a, c, b)) return true;
  if (d4 == 0 && on_segment(a, d, b)) return true;
  return false;
}

}  // namespace

std::vector<PolygonAnnotation> parse_annotations_text(std::string_view document,
                                                      std::string_view default_slide_id) {
  std::vector<PolygonAnnotation> out;
  if (document.find_first_not_of(" \t\r\n") == std::string_view::npos) return out;

  pt::ptree tree;
  try {
    std::istringstream in{std::string(document)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::ParseError, "malformed annotation document, line " +
                                           std::to_string(e.line()) + ": " +
                                           e.message());
  }

  std::string slide_id(default_slide_id);
  for (const auto& [name, child] : tree) {
    if (iequals(name, "annotations")) {
      if (const std::string* s = find_attr(child, "slide"); s && !s->empty()) {
        slide_id = *s;
      }
    }
  }
  collect_regions(tree, slide_id, out);
  return out;
}

std::vector<PolygonAnnotation> parse_annotations(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_annotations_text(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
      path.parent_path().filename().string());
}

std::string format_annotations(std::string_view slide_id,
                               std::span<const PolygonAnnotation> annotations) {
  std::ostringstream out;
  out.precision(17);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<Annotations slide=\"" << slide_id << "\">\n";
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    std::string id = a.region_id;
    const std::string prefix = std::string(slide_id) + "_";
    if (id.rfind(prefix, 0) == 0) id = id.substr(prefix.size());
    if (id.empty()) id = "r" + std::to_string(i);
    out << "  <Region id=\"" << id << "\" label=\"" << label_name(a.label) << "\">\n";
    for (const auto& v : a.vertices) {
      out << "    <Vertex x=\"" << v.x << "\" y=\"" << v.y << "\"/>\n";
    }
    out << "  </Region>\n";
  }
  out << "</Annotations>\n";
  return out.str();
}

bool is_simple_polygon(std::span<const Point> v) {
  const std::size_t n = v.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share a vertex by construction.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(a, b, v[j], v[(j + 1) % n])) return false;
    }
  }
  return true;
}

double polygon_area(std::span<const Point> v) {
  double twice = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % v.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

}  // namespace patchbag
