// Copyright 2026 The patchasd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>
#include <string>

#include "doctest.h"
#include "patchasd/checkpoint.hpp"
#include "patchasd/model.hpp"
#include "test_util.hpp"

using namespace patchasd;
using namespace patchasd::testing;

namespace {

std::string error_of(const std::string& bytes) {
  try {
    parse_archive(bytes, "test");
  } catch (const CheckpointError& e) {
    return e.what();
  }
  return "";
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

ModelConfig small_model() {
  ModelConfig m;
  m.vit.depth = 2;
  m.vit.dim = 16;
  m.vit.heads = 2;
  m.embed_dim = 12;
  m.num_classes = 4;
  return m;
}

}  // namespace

TEST_CASE("f64 archives round trip bit-exactly") {
  Rng rng(1);
  TensorArchive a;
  a.add("w", random_tensor({3, 4}, rng));
  a.add("edge", Tensor::vector({-0.0, std::numeric_limits<double>::denorm_min(), 1e308, -1e-308,
                                std::numeric_limits<double>::infinity()}));
  a.add("s", Tensor::scalar(2.5));
  a.set_meta("kind", "test");
  const TensorArchive b = parse_archive(serialize_archive(a));
  CHECK(b == a);
  CHECK(std::signbit(b.get("edge")[0]));
  CHECK(b.require_meta("kind") == "test");
  CHECK(b.get("s").shape().empty());
}

TEST_CASE("f32 archives store rounded values") {
  TensorArchive a;
  a.add("x", Tensor::vector({0.1, 1.0 / 3.0}));
  const TensorArchive b = parse_archive(serialize_archive(a, DType::F32));
  CHECK(b.get("x")[0] == static_cast<double>(0.1f));
  CHECK(b.get("x")[1] == static_cast<double>(1.0f / 3.0f));
}

TEST_CASE("archive API errors") {
  TensorArchive a;
  a.add("x", Tensor::vector({1.0}));
  CHECK_THROWS_AS(a.add("x", Tensor::vector({2.0})), CheckpointError);
  CHECK_THROWS_AS(a.add("", Tensor::vector({2.0})), CheckpointError);
  CHECK_THROWS_WITH_AS(a.get("missing"), doctest::Contains("missing"), CheckpointError);
  CHECK_THROWS_AS(a.require_meta("nope"), CheckpointError);
  CHECK_THROWS_AS(load_archive("/nonexistent/dir/x.ckpt"), CheckpointError);
}

TEST_CASE("corrupted files are rejected with named diagnostics") {
  Rng rng(2);
  TensorArchive a;
  a.add("enc.weight", random_tensor({3, 4}, rng));
  a.add("enc.bias", random_tensor({4}, rng));
  const std::string good = serialize_archive(a);

  const std::string shape = replace_once(good, "enc.weight\tf64\t3,4", "enc.weight\tf64\t3,5");
  CHECK(error_of(shape).find("enc.weight") != std::string::npos);

  const std::string dtype = replace_once(good, "enc.bias\tf64", "enc.bias\tf16");
  CHECK(error_of(dtype).find("enc.bias") != std::string::npos);

  CHECK(error_of(good.substr(0, good.size() - 8)).find("enc.bias") != std::string::npos);
  CHECK(error_of(good.substr(0, 10)).find("truncated") != std::string::npos);
  CHECK(error_of("XXXXXXXX" + good.substr(8)).find("magic") != std::string::npos);

  const std::string dup = replace_once(good, "enc.bias\t", "enc.weight\t");
  CHECK(error_of(dup).find("enc.weight") != std::string::npos);
}

TEST_CASE("model checkpoints round trip and check shapes") {
  const auto dir = scratch_dir("model_ckpt");
  const ModelConfig cfg = small_model();
  Rng rng(3);
  const ModelParams p = init_model(cfg, rng);
  save_model(dir / "m.ckpt", cfg, p);
  const auto [cfg2, p2] = load_model(dir / "m.ckpt");
  CHECK(cfg2.vit == cfg.vit);
  CHECK(cfg2.embed_dim == cfg.embed_dim);
  CHECK(cfg2.num_classes == cfg.num_classes);
  CHECK(cfg2.arcface.scale == cfg.arcface.scale);
  CHECK(cfg2.arcface.margin == cfg.arcface.margin);
  const auto fa = flatten(p), fb = flatten(p2);
  REQUIRE(fa.size() == fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == fb[i]);

  ModelConfig other = cfg;
  other.embed_dim = 8;
  try {
    model_from_archive(load_archive(dir / "m.ckpt"), other);
    FAIL("expected a shape mismatch");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("proj.weight") != std::string::npos);
  }

  const std::string bytes = read_bytes(dir / "m.ckpt");
  write_bytes(dir / "bad.ckpt", replace_once(bytes, "arcface.weight\tf64\t12,4", "arcface.weight\tf64\t12,5"));
  CHECK_THROWS_WITH_AS(load_model(dir / "bad.ckpt"), doctest::Contains("arcface.weight"), CheckpointError);
}
