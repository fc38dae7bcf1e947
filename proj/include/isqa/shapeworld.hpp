#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "isqa/messages.hpp"
#include "isqa/tensor.hpp"

namespace isqa::shapeworld {

enum class Shape { circle, square, triangle, star };
enum class Size { small, large };
enum class Fill { solid, hollow, striped };
enum class Category { yesno, number, other };

inline constexpr Shape kShapes[] = {Shape::circle, Shape::square, Shape::triangle, Shape::star};

std::string to_string(Shape s);
std::string to_string(Size s);
std::string to_string(Fill f);
std::string to_string(Category c);
Shape parse_shape(const std::string& s);
Size parse_size(const std::string& s);
Fill parse_fill(const std::string& s);
Category parse_category(const std::string& s);

struct SceneObject {
  Shape shape = Shape::circle;
  Size size = Size::small;
  int cx = 0;  // column of the centre
  int cy = 0;  // row of the centre
  Fill fill = Fill::solid;
  bool operator==(const SceneObject&) const = default;
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  std::vector<SceneObject> objects;
  bool operator==(const SceneSpec&) const = default;
};

struct SceneConfig {
  int height = 64;
  int width = 64;
  int min_objects = 1;
  int max_objects = 5;
  int max_retries = 200;  // placement attempts per object
};

int radius_of(Size s);
int min_separation(const SceneObject& a, const SceneObject& b);
bool inside_shape(const SceneObject& obj, Real x, Real y, Real shrink = 0);

struct QAPair {
  std::vector<std::string> question;
  Category category = Category::yesno;
  int answer = 0;  // index into answer_vocabulary()
  bool operator==(const QAPair&) const = default;
};

// Closed, index-stable answer list shared by training and evaluation.
const std::vector<std::string>& answer_vocabulary();
int answer_index(const std::string& answer);  // -1 when absent

// Tokens the question templates can emit, plus "<unk>" at index 0.
const std::vector<std::string>& question_vocabulary();
int token_id(const std::string& token);  // unknown -> 0

bool contains_color_token(const std::vector<std::string>& question);
std::string join_tokens(const std::vector<std::string>& tokens);
std::vector<std::string> split_tokens(const std::string& text);

// Image layout is {3, H, W}; the three channels are equal (grayscale scene on white).
Tensor render(const SceneSpec& scene);
struct GeneratedScene {
  Tensor image;
  SceneSpec scene;
};
GeneratedScene generate_scene(std::uint64_t seed, const SceneConfig& config);
QAPair generate_question(const SceneSpec& scene, std::uint64_t seed);

// Gradient-magnitude edge map: edges -> 0 (activated), flat regions -> 1.
Sketch reference_sketch(const Tensor& image);
Tensor grayscale(const Tensor& image);  // {H, W}

std::string scene_to_text(const SceneSpec& scene);
SceneSpec scene_from_text(const std::string& text);

struct Record {
  int id = 0;
  std::uint64_t seed = 0;
  SceneSpec scene;
  Tensor image;
  QAPair qa;
};

struct Dataset {
  std::uint64_t seed = 0;
  SceneConfig config;
  std::vector<Record> train;
  std::vector<Record> eval;
};

// Record i (train first, then eval) draws from stream derive_seed(seed, i), so
// the two splits never share a scene seed.
Dataset build_dataset(std::uint64_t seed, int n_train, int n_eval, const SceneConfig& config = {});

// Directory layout: dataset.txt, manifest_train.tsv, manifest_eval.tsv,
// scenes/<id>.txt and images/<id>.bin. Manifest columns: id, scene file,
// image file, question tokens, category, answer index.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);
std::string manifest_digest(const std::string& dir);

}  // namespace isqa::shapeworld
