#include "lupi/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lupi/errors.hpp"
#include "lupi/pnm.hpp"

namespace lupi {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& obj, const char* key, const char* what) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string(what) + " is missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string(what) + " field '" + key + "' has the wrong type");
  }
}

const json& array_field(const json& root, const char* key) {
  auto it = root.find(key);
  if (it == root.end() || !it->is_array()) {
    throw DataError(std::string("manifest is missing array '") + key + "'");
  }
  return *it;
}

}  // namespace

ClassId CocoManifest::class_of(std::int64_t category_id) const {
  auto it = std::lower_bound(categories.begin(), categories.end(), category_id,
                             [](const CocoCategory& c, std::int64_t id) { return c.id < id; });
  if (it == categories.end() || it->id != category_id) {
    throw DataError("unknown category id " + std::to_string(category_id));
  }
  return ClassId{static_cast<int>(it - categories.begin())};
}

std::vector<std::string> CocoManifest::category_names() const {
  std::vector<std::string> names;
  names.reserve(categories.size());
  for (const auto& c : categories) names.push_back(c.name);
  return names;
}

CocoManifest parse_coco(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed manifest JSON: ") + e.what());
  }
  if (!root.is_object()) throw DataError("manifest root must be an object");

  CocoManifest m;
  std::set<std::int64_t> image_ids;
  for (const auto& j : array_field(root, "images")) {
    CocoImage img;
    img.id = field<std::int64_t>(j, "id", "image");
    img.file_name = field<std::string>(j, "file_name", "image");
    img.width = field<int>(j, "width", "image");
    img.height = field<int>(j, "height", "image");
    if (img.width <= 0 || img.height <= 0) {
      throw DataError("image " + std::to_string(img.id) + " has non-positive dimensions");
    }
    if (auto s = j.find("split"); s != j.end()) img.split = split_from_string(s->get<std::string>());
    if (!image_ids.insert(img.id).second) {
      throw DataError("duplicate image id " + std::to_string(img.id));
    }
    m.images.push_back(std::move(img));
  }

  for (const auto& j : array_field(root, "categories")) {
    m.categories.push_back({field<std::int64_t>(j, "id", "category"),
                            field<std::string>(j, "name", "category")});
  }
  std::sort(m.categories.begin(), m.categories.end(),
            [](const CocoCategory& a, const CocoCategory& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < m.categories.size(); ++i) {
    if (m.categories[i].id == m.categories[i - 1].id) {
      throw DataError("duplicate category id " + std::to_string(m.categories[i].id));
    }
  }

  for (const auto& j : array_field(root, "annotations")) {
    CocoAnnotation a;
    a.id = field<std::int64_t>(j, "id", "annotation");
    a.image_id = field<std::int64_t>(j, "image_id", "annotation");
    a.category_id = field<std::int64_t>(j, "category_id", "annotation");
    const auto bbox = field<std::vector<double>>(j, "bbox", "annotation");
    if (bbox.size() != 4) throw DataError("annotation " + std::to_string(a.id) + ": bbox needs 4 values");
    std::copy(bbox.begin(), bbox.end(), a.bbox.begin());
    if (!image_ids.contains(a.image_id)) {
      throw DataError("referential integrity: annotation " + std::to_string(a.id) +
                      " references missing image id " + std::to_string(a.image_id));
    }
    auto cat = std::find_if(m.categories.begin(), m.categories.end(),
                            [&](const CocoCategory& c) { return c.id == a.category_id; });
    if (cat == m.categories.end()) {
      throw DataError("referential integrity: annotation " + std::to_string(a.id) +
                      " references missing category id " + std::to_string(a.category_id));
    }
    if (!(a.bbox[2] > 0.0) || !(a.bbox[3] > 0.0)) {
      throw DataError("annotation " + std::to_string(a.id) + " has non-positive bbox size");
    }
    m.annotations.push_back(a);
  }
  return m;
}

std::string serialize_coco(const CocoManifest& manifest) {
  // ordered_json keeps insertion order so output is stable and readable.
  nlohmann::ordered_json root;
  root["images"] = nlohmann::ordered_json::array();
  for (const auto& img : manifest.images) {
    nlohmann::ordered_json j;
    j["id"] = img.id;
    j["file_name"] = img.file_name;
    j["width"] = img.width;
    j["height"] = img.height;
    if (img.split) j["split"] = std::string(to_string(*img.split));
    root["images"].push_back(std::move(j));
  }
  root["annotations"] = nlohmann::ordered_json::array();
  for (const auto& a : manifest.annotations) {
    nlohmann::ordered_json j;
    j["id"] = a.id;
    j["image_id"] = a.image_id;
    j["category_id"] = a.category_id;
    j["bbox"] = {a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3]};
    j["area"] = a.bbox[2] * a.bbox[3];
    j["iscrowd"] = 0;
    root["annotations"].push_back(std::move(j));
  }
  root["categories"] = nlohmann::ordered_json::array();
  for (const auto& c : manifest.categories) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["name"] = c.name;
    root["categories"].push_back(std::move(j));
  }
  return root.dump(1) + "\n";
}

CocoManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_coco(ss.str());
}

void write_manifest(const std::filesystem::path& path, const CocoManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out << serialize_coco(manifest);
}

ImagePlane normalize_image(const ImagePlane& plane) {
  const auto& v = plane.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<double> out(v.size(), 0.0);
  if (hi > lo) {
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) * inv;
    // Pin the extremes so the range is exactly [0,1] despite rounding.
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == hi) out[i] = 1.0;
    }
  }
  return ImagePlane(plane.width(), plane.height(), std::move(out));
}

Dataset load_dataset(const CocoManifest& manifest, const std::filesystem::path& image_dir,
                     const LoadOptions& options) {
  std::map<std::int64_t, std::vector<Annotation>> by_image;
  for (const auto& a : manifest.annotations) {
    by_image[a.image_id].push_back(
        {BoundingBox::from_xywh(a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3]),
         manifest.class_of(a.category_id)});
  }

  Dataset ds;
  ds.categories = manifest.category_names();
  ds.split = options.split.value_or(Split::kTest);
  for (const auto& img : manifest.images) {
    if (options.split && img.split.value_or(Split::kTest) != *options.split) continue;
    const auto path = image_dir / img.file_name;
    auto planes = pnm::read_ppm(path);
    if (planes[0].width() != img.width || planes[0].height() != img.height) {
      throw DataError("raster '" + path.string() + "' is " + std::to_string(planes[0].width()) +
                      "x" + std::to_string(planes[0].height()) + " but the manifest says " +
                      std::to_string(img.width) + "x" + std::to_string(img.height));
    }
    if (options.normalize) {
      for (auto& p : planes) p = normalize_image(p);
    }
    ImageSample s{std::filesystem::path(img.file_name).stem().string(), std::move(planes),
                  std::nullopt, {}};
    if (auto it = by_image.find(img.id); it != by_image.end()) s.annotations = it->second;
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

}  // namespace lupi
