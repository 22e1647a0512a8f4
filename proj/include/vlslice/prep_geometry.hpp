#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vlslice/errors.hpp"

// Geometry for turning annotated object boxes into square crop directives.
// Nothing here touches pixels; the embedder consumes the directives.

namespace vlslice::prep {

inline constexpr double kMinBoxArea = 64.0 * 64.0;
inline constexpr double kCropScale = 1.1;
inline constexpr double kDefaultIouThreshold = 0.5;

struct BoxRecord {
  std::string image_id;
  int image_w = 0;
  int image_h = 0;
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  std::string class_id;
  std::optional<std::string> parent_class_id;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return std::max(0.0, width()) * std::max(0.0, height()); }

  bool operator==(const BoxRecord&) const = default;
};

using Rgb = std::array<std::uint8_t, 3>;

struct CropDirective {
  std::string image_id;
  double center_x = 0.0;
  double center_y = 0.0;
  double side = 0.0;
  Rgb pad_color{0, 0, 0};
  bool needs_padding = false;  // part of the square lies outside the image
};

inline BoxRecord clip_to_image(BoxRecord b) {
  b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(b.image_w));
  b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(b.image_w));
  b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(b.image_h));
  b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(b.image_h));
  return b;
}

inline double iou(const BoxRecord& a, const BoxRecord& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// True when `inner` lies entirely inside `outer` (edges may touch).
inline bool contains(const BoxRecord& outer, const BoxRecord& inner) {
  return outer.x1 <= inner.x1 && outer.y1 <= inner.y1 && inner.x2 <= outer.x2 && inner.y2 <= outer.y2;
}

/// Greedy per-class suppression for unscored ground-truth boxes of one image.
/// Boxes are visited largest area first (input order breaks ties); a box is
/// dropped when its IoU with an already kept box of its class exceeds the
/// threshold. Survivors keep their input order.
inline std::vector<BoxRecord> nms(std::span<const BoxRecord> boxes,
                                  double iou_threshold = kDefaultIouThreshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    fail(ErrorCode::invalid_argument, "IoU threshold must lie in (0, 1]");
  }
  if (boxes.empty()) return {};
  for (const auto& b : boxes) {
    if (b.image_id != boxes.front().image_id) {
      fail(ErrorCode::invalid_argument, "nms expects boxes from a single image", b.image_id);
    }
  }
  std::vector<std::size_t> order(boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].area() > boxes[b].area(); });
  std::vector<bool> keep(boxes.size(), false);
  std::vector<std::size_t> kept;
  for (auto i : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return boxes[k].class_id == boxes[i].class_id && iou(boxes[k], boxes[i]) > iou_threshold;
    });
    if (!suppressed) {
      kept.push_back(i);
      keep[i] = true;
    }
  }
  std::vector<BoxRecord> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (keep[i]) out.push_back(boxes[i]);
  }
  return out;
}

/// Square crop of side 1.1 * max(w, h) centred on the box.
inline CropDirective make_crop_directive(const BoxRecord& box, Rgb pad_color = {0, 0, 0}) {
  if (!(box.width() > 0.0) || !(box.height() > 0.0)) {
    fail(ErrorCode::invalid_argument, "degenerate box on image '" + box.image_id + "'", box.image_id);
  }
  CropDirective d;
  d.image_id = box.image_id;
  d.center_x = (box.x1 + box.x2) / 2.0;
  d.center_y = (box.y1 + box.y2) / 2.0;
  d.side = kCropScale * std::max(box.height(), box.width());
  d.pad_color = pad_color;
  const double half = d.side / 2.0;
  d.needs_padding = d.center_x - half < 0.0 || d.center_y - half < 0.0 ||
                    d.center_x + half > box.image_w || d.center_y + half > box.image_h;
  return d;
}

using ClassHierarchy = std::map<std::string, std::string>;  // child -> parent

inline void check_acyclic(const ClassHierarchy& hierarchy) {
  for (const auto& [child, parent] : hierarchy) {
    std::set<std::string> seen{child};
    for (std::string current = parent;;) {
      if (!seen.insert(current).second) {
        fail(ErrorCode::invalid_argument, "class hierarchy has a cycle through '" + current + "'", current);
      }
      auto it = hierarchy.find(current);
      if (it == hierarchy.end()) break;
      current = it->second;
    }
  }
}

/// Drops boxes under 64x64 px and boxes fully inside a same-image box of
/// their parent class. The parent comes from the box's own parent_class_id
/// if present, otherwise from `hierarchy`.
inline std::vector<BoxRecord> filter_boxes(std::span<const BoxRecord> boxes, const ClassHierarchy& hierarchy) {
  check_acyclic(hierarchy);
  auto parent_of = [&](const BoxRecord& b) -> std::optional<std::string> {
    if (b.parent_class_id) return b.parent_class_id;
    auto it = hierarchy.find(b.class_id);
    if (it == hierarchy.end()) return std::nullopt;
    return it->second;
  };
  std::vector<BoxRecord> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    if (b.area() < kMinBoxArea) continue;
    const auto parent = parent_of(b);
    bool bounded = false;
    if (parent) {
      for (std::size_t j = 0; j < boxes.size() && !bounded; ++j) {
        bounded = j != i && boxes[j].image_id == b.image_id && boxes[j].class_id == *parent &&
                  contains(boxes[j], b);
      }
    }
    if (!bounded) out.push_back(b);
  }
  return out;
}

/// Full pipeline over many images: clip, per-image NMS, filter, directives.
inline std::vector<CropDirective> prepare_crops(std::span<const BoxRecord> boxes, const ClassHierarchy& hierarchy,
                                                Rgb pad_color, double iou_threshold = kDefaultIouThreshold) {
  std::vector<std::string> image_order;
  std::unordered_map<std::string, std::vector<BoxRecord>> by_image;
  for (const auto& b : boxes) {
    auto [it, inserted] = by_image.try_emplace(b.image_id);
    if (inserted) image_order.push_back(b.image_id);
    it->second.push_back(clip_to_image(b));
  }
  std::vector<CropDirective> out;
  for (const auto& image : image_order) {
    auto& group = by_image[image];
    std::erase_if(group, [](const BoxRecord& b) { return !(b.area() > 0.0); });
    const auto survivors = filter_boxes(nms(group, iou_threshold), hierarchy);
    for (const auto& b : survivors) out.push_back(make_crop_directive(b, pad_color));
  }
  return out;
}

// JSON-lines records.

inline void to_json(nlohmann::json& j, const BoxRecord& b) {
  j = nlohmann::json{{"image_id", b.image_id}, {"image_w", b.image_w}, {"image_h", b.image_h},
                     {"x1", b.x1}, {"y1", b.y1}, {"x2", b.x2}, {"y2", b.y2}, {"class_id", b.class_id}};
  if (b.parent_class_id) j["parent_class_id"] = *b.parent_class_id;
}

inline void from_json(const nlohmann::json& j, BoxRecord& b) {
  j.at("image_id").get_to(b.image_id);
  j.at("image_w").get_to(b.image_w);
  j.at("image_h").get_to(b.image_h);
  j.at("x1").get_to(b.x1);
  j.at("y1").get_to(b.y1);
  j.at("x2").get_to(b.x2);
  j.at("y2").get_to(b.y2);
  j.at("class_id").get_to(b.class_id);
  if (j.contains("parent_class_id") && !j.at("parent_class_id").is_null()) {
    b.parent_class_id = j.at("parent_class_id").get<std::string>();
  } else {
    b.parent_class_id.reset();
  }
  if (b.image_w <= 0 || b.image_h <= 0) {
    fail(ErrorCode::format, "image dimensions must be positive for '" + b.image_id + "'", b.image_id);
  }
  if (!(b.x1 < b.x2) || !(b.y1 < b.y2)) {
    fail(ErrorCode::format, "box corners must satisfy x1<x2, y1<y2 for '" + b.image_id + "'", b.image_id);
  }
}

inline void to_json(nlohmann::json& j, const CropDirective& d) {
  j = nlohmann::json{{"image_id", d.image_id}, {"center_x", d.center_x}, {"center_y", d.center_y},
                     {"side", d.side}, {"pad_color", d.pad_color}, {"needs_padding", d.needs_padding}};
}

inline void from_json(const nlohmann::json& j, CropDirective& d) {
  j.at("image_id").get_to(d.image_id);
  j.at("center_x").get_to(d.center_x);
  j.at("center_y").get_to(d.center_y);
  j.at("side").get_to(d.side);
  j.at("pad_color").get_to(d.pad_color);
  d.needs_padding = j.value("needs_padding", false);
}

}  // namespace vlslice::prep
