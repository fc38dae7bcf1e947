#include "isqa/shapeworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "isqa/errors.hpp"
#include "isqa/params.hpp"

namespace isqa::shapeworld {

namespace fs = std::filesystem;

namespace {

// Intensities are dyadic so they survive float32 storage unchanged.
constexpr Real kInk = 0.125;
constexpr Real kStripeLight = 0.75;
constexpr Real kOutline = 2.5;
constexpr Real kEdgeScale = 2.0;

const std::array<const char*, 4> kShapeNames = {"circle", "square", "triangle", "star"};
const std::array<const char*, 2> kSizeNames = {"small", "large"};
const std::array<const char*, 3> kFillNames = {"solid", "hollow", "striped"};
const std::array<const char*, 3> kCategoryNames = {"yesno", "number", "other"};

template <class E, std::size_t N>
E parse_enum(const std::array<const char*, N>& names, const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<E>(i);
  throw ContractError(std::string("unknown ") + what + " '" + s + "'");
}

bool point_in_polygon(const std::vector<std::pair<Real, Real>>& poly, Real x, Real y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto [xi, yi] = poly[i];
    const auto [xj, yj] = poly[j];
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) in = !in;
  }
  return in;
}

std::vector<std::pair<Real, Real>> star_polygon(Real cx, Real cy, Real r) {
  std::vector<std::pair<Real, Real>> pts;
  for (int k = 0; k < 10; ++k) {
    const Real rad = (k % 2 == 0) ? r : r * 0.45;
    const Real ang = -M_PI / 2 + k * M_PI / 5;
    pts.emplace_back(cx + rad * std::cos(ang), cy + rad * std::sin(ang));
  }
  return pts;
}

int count_shape(const SceneSpec& s, Shape shape) {
  return static_cast<int>(std::count_if(s.objects.begin(), s.objects.end(),
                                        [&](const SceneObject& o) { return o.shape == shape; }));
}

const SceneObject* unique_object(const SceneSpec& s, Shape shape) {
  const SceneObject* found = nullptr;
  for (const auto& o : s.objects) {
    if (o.shape != shape) continue;
    if (found) return nullptr;
    found = &o;
  }
  return found;
}

std::string pad_id(int id) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << id;
  return os.str();
}

}  // namespace

std::string to_string(Shape s) { return kShapeNames[static_cast<int>(s)]; }
std::string to_string(Size s) { return kSizeNames[static_cast<int>(s)]; }
std::string to_string(Fill f) { return kFillNames[static_cast<int>(f)]; }
std::string to_string(Category c) { return kCategoryNames[static_cast<int>(c)]; }
Shape parse_shape(const std::string& s) { return parse_enum<Shape>(kShapeNames, s, "shape"); }
Size parse_size(const std::string& s) { return parse_enum<Size>(kSizeNames, s, "size"); }
Fill parse_fill(const std::string& s) { return parse_enum<Fill>(kFillNames, s, "fill"); }
Category parse_category(const std::string& s) { return parse_enum<Category>(kCategoryNames, s, "category"); }

int radius_of(Size s) { return s == Size::small ? 5 : 9; }

int min_separation(const SceneObject& a, const SceneObject& b) {
  return radius_of(a.size) + radius_of(b.size) + 2;
}

bool inside_shape(const SceneObject& obj, Real x, Real y, Real shrink) {
  const Real r = radius_of(obj.size) - shrink;
  if (r <= 0) return false;
  const Real dx = x - obj.cx, dy = y - obj.cy;
  switch (obj.shape) {
    case Shape::circle:
      return dx * dx + dy * dy <= r * r;
    case Shape::square:
      return std::max(std::abs(dx), std::abs(dy)) <= 0.8 * r;
    case Shape::triangle: {
      const Real top = obj.cy - r, bottom = obj.cy + 0.7 * r;
      if (y < top || y > bottom) return false;
      const Real t = (y - top) / (bottom - top);
      return std::abs(dx) <= t * 0.95 * r;
    }
    case Shape::star:
      return point_in_polygon(star_polygon(obj.cx, obj.cy, r), x, y);
  }
  return false;
}

const std::vector<std::string>& answer_vocabulary() {
  static const std::vector<std::string> v = {"yes",    "no",     "0",      "1",        "2",    "3",
                                             "4",      "5",      "6",      "circle",   "square", "triangle",
                                             "star",   "small",  "large",  "solid",    "hollow", "striped"};
  return v;
}

int answer_index(const std::string& answer) {
  const auto& v = answer_vocabulary();
  auto it = std::find(v.begin(), v.end(), answer);
  return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

const std::vector<std::string>& question_vocabulary() {
  static const std::vector<std::string> v = {"<unk>", "how",   "many",     "is",      "there",  "a",
                                             "the",   "left",  "of",       "what",    "shape",  "largest",
                                             "object", "fill", "size",     "circle",  "square", "triangle",
                                             "star"};
  return v;
}

int token_id(const std::string& token) {
  const auto& v = question_vocabulary();
  auto it = std::find(v.begin(), v.end(), token);
  return it == v.end() ? 0 : static_cast<int>(it - v.begin());
}

bool contains_color_token(const std::vector<std::string>& question) {
  static const std::vector<std::string> colors = {"red",   "green", "blue",  "yellow", "orange", "purple", "pink",
                                                  "brown", "black", "white", "gray",   "grey",   "color",  "colour"};
  for (const auto& t : question)
    if (std::find(colors.begin(), colors.end(), t) != colors.end()) return true;
  return false;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) s += (i ? " " : "") + tokens[i];
  return s;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  for (std::string t; is >> t;) out.push_back(t);
  return out;
}

Tensor render(const SceneSpec& scene) {
  Tensor img({3, scene.height, scene.width}, 1.0);
  for (const auto& obj : scene.objects) {
    const int r = radius_of(obj.size);
    for (int y = std::max(0, obj.cy - r - 1); y <= std::min(scene.height - 1, obj.cy + r + 1); ++y) {
      for (int x = std::max(0, obj.cx - r - 1); x <= std::min(scene.width - 1, obj.cx + r + 1); ++x) {
        if (!inside_shape(obj, x, y)) continue;
        const bool ring = !inside_shape(obj, x, y, kOutline);
        Real v = 1.0;
        switch (obj.fill) {
          case Fill::solid: v = kInk; break;
          case Fill::hollow: v = ring ? kInk : 1.0; break;
          case Fill::striped: v = ring || ((y - obj.cy + 64) % 4 < 2) ? kInk : kStripeLight; break;
        }
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::min(img.at(c, y, x), v);
      }
    }
  }
  return img;
}

GeneratedScene generate_scene(std::uint64_t seed, const SceneConfig& config) {
  if (config.min_objects < 0 || config.max_objects < config.min_objects) {
    throw ConfigError("object-count range is empty");
  }
  Rng rng(seed);
  const int n = rng.uniform_int(config.min_objects, config.max_objects);
  std::vector<SceneObject> objects(n);
  for (auto& obj : objects) {
    obj.shape = static_cast<Shape>(rng.uniform_int(0, 3));
    obj.size = static_cast<Size>(rng.uniform_int(0, 1));
    obj.fill = static_cast<Fill>(rng.uniform_int(0, 2));
    if (2 * radius_of(obj.size) + 3 > std::min(config.height, config.width)) {
      throw GenerationError("canvas too small for objects");
    }
  }
  // Sequential placement can paint itself into a corner, so whole layouts are
  // retried before giving up.
  constexpr int kLayoutAttempts = 20;
  for (int layout = 0; layout < kLayoutAttempts; ++layout) {
    SceneSpec scene{config.height, config.width, {}};
    bool ok = true;
    for (SceneObject obj : objects) {
      const int r = radius_of(obj.size);
      bool placed = false;
      for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
        obj.cx = rng.uniform_int(r + 1, config.width - r - 2);
        obj.cy = rng.uniform_int(r + 1, config.height - r - 2);
        placed = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
          const Real dx = o.cx - obj.cx, dy = o.cy - obj.cy;
          return std::sqrt(dx * dx + dy * dy) >= min_separation(o, obj);
        });
      }
      if (!placed) {
        ok = false;
        break;
      }
      scene.objects.push_back(obj);
    }
    if (ok) return {render(scene), scene};
  }
  throw GenerationError("could not place " + std::to_string(n) + " objects with " +
                        std::to_string(config.max_retries) + " attempts each over " +
                        std::to_string(kLayoutAttempts) + " layouts");
}

QAPair generate_question(const SceneSpec& scene, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Shape> unique;
  for (Shape s : kShapes)
    if (unique_object(scene, s)) unique.push_back(s);
  int large = 0;
  const SceneObject* largest = nullptr;
  for (const auto& o : scene.objects)
    if (o.size == Size::large) {
      ++large;
      largest = &o;
    }

  auto yes_no = [](bool b) { return answer_index(b ? "yes" : "no"); };
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const auto category = static_cast<Category>(rng.uniform_int(0, 2));
    switch (category) {
      case Category::number: {
        const Shape s = kShapes[rng.uniform_int(0, 3)];
        return {{"how", "many", to_string(s)}, category, answer_index(std::to_string(count_shape(scene, s)))};
      }
      case Category::yesno: {
        if (rng.uniform_int(0, 1) == 0) {
          const Shape s = kShapes[rng.uniform_int(0, 3)];
          return {{"is", "there", "a", to_string(s)}, category, yes_no(count_shape(scene, s) > 0)};
        }
        if (unique.size() < 2) continue;
        const int i = rng.uniform_int(0, static_cast<int>(unique.size()) - 1);
        int j = rng.uniform_int(0, static_cast<int>(unique.size()) - 2);
        if (j >= i) ++j;
        const SceneObject* a = unique_object(scene, unique[i]);
        const SceneObject* b = unique_object(scene, unique[j]);
        return {{"is", "the", to_string(a->shape), "left", "of", "the", to_string(b->shape)},
                category,
                yes_no(a->cx < b->cx)};
      }
      case Category::other: {
        const int t = rng.uniform_int(0, 2);
        if (t == 0) {
          if (large != 1) continue;
          return {{"what", "shape", "is", "the", "largest", "object"}, category,
                  answer_index(to_string(largest->shape))};
        }
        if (unique.empty()) continue;
        const Shape s = unique[rng.uniform_int(0, static_cast<int>(unique.size()) - 1)];
        const SceneObject* o = unique_object(scene, s);
        if (t == 1) {
          return {{"what", "is", "the", "fill", "of", "the", to_string(s)}, category, answer_index(to_string(o->fill))};
        }
        return {{"what", "size", "is", "the", to_string(s)}, category, answer_index(to_string(o->size))};
      }
    }
  }
  throw GenerationError("no applicable question template");
}

Tensor grayscale(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("image must be {C,H,W}, got " + image.shape_string());
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor g({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Real acc = 0;
      for (int ch = 0; ch < c; ++ch) acc += image.at(ch, y, x);
      g.at(y, x) = acc / c;
    }
  return g;
}

Sketch reference_sketch(const Tensor& image) {
  const Tensor g = grayscale(image);
  const int h = g.dim(0), w = g.dim(1);
  auto px = [&](int y, int x) { return g.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)); };
  Sketch s = Sketch::blank(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Real gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                      (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const Real gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                      (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      const Real mag = std::sqrt(gx * gx + gy * gy);
      s.at(y, x) = std::clamp(1.0 - mag / kEdgeScale, 0.0, 1.0);
    }
  return s;
}

std::string scene_to_text(const SceneSpec& scene) {
  std::ostringstream os;
  os << "canvas " << scene.height << ' ' << scene.width << '\n';
  for (const auto& o : scene.objects) {
    os << "object " << to_string(o.shape) << ' ' << to_string(o.size) << ' ' << o.cx << ' ' << o.cy << ' '
       << to_string(o.fill) << '\n';
  }
  return os.str();
}

SceneSpec scene_from_text(const std::string& text) {
  std::istringstream is(text);
  SceneSpec s;
  std::string line;
  bool have_canvas = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    if (kind == "canvas") {
      if (!(ls >> s.height >> s.width)) throw IoError("malformed canvas line: " + line);
      have_canvas = true;
    } else if (kind == "object") {
      std::string shape, size, fill;
      SceneObject o;
      if (!(ls >> shape >> size >> o.cx >> o.cy >> fill)) throw IoError("malformed object line: " + line);
      o.shape = parse_shape(shape);
      o.size = parse_size(size);
      o.fill = parse_fill(fill);
      s.objects.push_back(o);
    } else {
      throw IoError("unknown scene record '" + kind + "'");
    }
  }
  if (!have_canvas) throw IoError("scene text lacks canvas line");
  return s;
}

Dataset build_dataset(std::uint64_t seed, int n_train, int n_eval, const SceneConfig& config) {
  if (n_train <= 0 || n_eval <= 0) throw ConfigError("dataset split sizes must be positive");
  Dataset ds;
  ds.seed = seed;
  ds.config = config;
  for (int i = 0; i < n_train + n_eval; ++i) {
    Record rec;
    rec.id = i;
    rec.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    auto gen = generate_scene(rec.seed, config);
    rec.scene = std::move(gen.scene);
    rec.image = std::move(gen.image);
    rec.qa = generate_question(rec.scene, derive_seed(rec.seed, 1));
    (i < n_train ? ds.train : ds.eval).push_back(std::move(rec));
  }
  return ds;
}

namespace {

void write_manifest(const fs::path& path, const std::vector<Record>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) {
    const std::string id = pad_id(r.id);
    out << r.id << '\t' << "scenes/" << id << ".txt" << '\t' << "images/" << id << ".bin" << '\t'
        << join_tokens(r.qa.question) << '\t' << to_string(r.qa.category) << '\t' << r.qa.answer << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Record> read_manifest(const fs::path& dir, const std::string& name, std::uint64_t seed) {
  std::ifstream in(dir / name);
  if (!in) throw IoError("missing manifest " + (dir / name).string());
  std::vector<Record> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, '\t');) cols.push_back(c);
    if (cols.size() != 6) throw IoError("manifest line has " + std::to_string(cols.size()) + " columns: " + line);
    Record r;
    r.id = std::stoi(cols[0]);
    r.seed = derive_seed(seed, static_cast<std::uint64_t>(r.id));
    std::ifstream sf(dir / cols[1]);
    if (!sf) throw IoError("missing scene file " + cols[1]);
    std::stringstream buf;
    buf << sf.rdbuf();
    r.scene = scene_from_text(buf.str());
    r.image = load_tensor((dir / cols[2]).string());
    r.qa.question = split_tokens(cols[3]);
    r.qa.category = parse_category(cols[4]);
    r.qa.answer = std::stoi(cols[5]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& ds) {
  const fs::path root(dir);
  fs::create_directories(root / "scenes");
  fs::create_directories(root / "images");
  {
    std::ofstream meta(root / "dataset.txt");
    if (!meta) throw IoError("cannot write dataset metadata in " + dir);
    meta << "seed " << ds.seed << "\nn_train " << ds.train.size() << "\nn_eval " << ds.eval.size() << "\ncanvas "
         << ds.config.height << ' ' << ds.config.width << "\nobjects " << ds.config.min_objects << ' '
         << ds.config.max_objects << '\n';
  }
  for (const auto* split : {&ds.train, &ds.eval}) {
    for (const auto& r : *split) {
      const std::string id = pad_id(r.id);
      std::ofstream sf(root / "scenes" / (id + ".txt"));
      if (!sf) throw IoError("cannot write scene " + id);
      sf << scene_to_text(r.scene);
      save_tensor((root / "images" / (id + ".bin")).string(), r.image);
    }
  }
  write_manifest(root / "manifest_train.tsv", ds.train);
  write_manifest(root / "manifest_eval.tsv", ds.eval);
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream meta(root / "dataset.txt");
  if (!meta) throw IoError("no dataset at " + dir + " (missing dataset.txt)");
  Dataset ds;
  std::string key;
  while (meta >> key) {
    if (key == "seed") meta >> ds.seed;
    else if (key == "canvas") meta >> ds.config.height >> ds.config.width;
    else if (key == "objects") meta >> ds.config.min_objects >> ds.config.max_objects;
    else {
      std::string ignored;
      meta >> ignored;
    }
  }
  ds.train = read_manifest(root, "manifest_train.tsv", ds.seed);
  ds.eval = read_manifest(root, "manifest_eval.tsv", ds.seed);
  return ds;
}

std::string manifest_digest(const std::string& dir) {
  const fs::path root(dir);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* name : {"manifest_train.tsv", "manifest_eval.tsv"}) {
    std::ifstream in(root / name, std::ios::binary);
    if (!in) throw IoError("missing manifest " + (root / name).string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h = fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(content.data()), content.size()), h);
  }
  return digest_hex(h);
}

}  // namespace isqa::shapeworld
