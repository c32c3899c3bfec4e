// Copyright 2026 The DRIFT Toolkit Authors
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

#include "drift/tensor.hpp"

#include <cmath>

#include "gtest/gtest.h"

#include "drift/rng.hpp"

namespace drift {
namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, double bound) {
  Tensor t(shape);
  for (double& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

Shape random_shape(Rng& rng) {
  Shape s(1 + rng.below(3));
  for (auto& e : s) e = 1 + rng.below(6);
  return s;
}

TEST(TensorTest, AddElementwise) {
  const Tensor r = add(Tensor::vector({1, 2}), Tensor::vector({3, 4}));
  EXPECT_EQ(r[0], 4);
  EXPECT_EQ(r[1], 6);
}

TEST(TensorTest, AddZerosIsIdentity) {
  const Tensor x = Tensor::vector({1.5, -2.25, 7});
  EXPECT_TRUE(add(x, Tensor(x.shape())).bit_equal(x));
}

TEST(TensorTest, AddRejectsShapeMismatch) {
  EXPECT_THROW(add(Tensor::vector({1}), Tensor::vector({1, 2})), ShapeError);
}

TEST(TensorTest, AddRejectsDtypeMismatch) {
  EXPECT_THROW(add(Tensor({2}, DType::f32), Tensor({2}, DType::f64)), ShapeError);
}

TEST(TensorTest, Scale) {
  const Tensor r = scale(Tensor::vector({2, -2}), 0.5);
  EXPECT_EQ(r[0], 1);
  EXPECT_EQ(r[1], -1);
  const Tensor x = Tensor::vector({3, -1, 0.25});
  const Tensor z = scale(x, 0);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(scale(x, 1).bit_equal(x));
}

TEST(TensorTest, L2Norm) {
  EXPECT_EQ(l2_norm(Tensor::vector({3, 4})), 5.0);
  EXPECT_EQ(l2_norm(Tensor({7})), 0.0);
  EXPECT_EQ(l2_norm(Tensor::vector({1, 1, 1, 1})), 2.0);
}

TEST(TensorTest, Dot) {
  EXPECT_EQ(dot(Tensor::vector({1, 0}), Tensor::vector({0, 1})), 0.0);
  EXPECT_EQ(dot(Tensor::vector({1, 2}), Tensor::vector({3, 4})), 11.0);
  const Tensor x = Tensor::vector({0.3, -1.7, 2.2});
  EXPECT_NEAR(dot(x, x), l2_norm(x) * l2_norm(x), 1e-12);
  EXPECT_THROW(dot(Tensor::vector({1}), Tensor::vector({1, 2})), ShapeError);
}

TEST(TensorTest, CosineSim) {
  const Tensor x = Tensor::vector({0.3, -1.7, 2.2});
  EXPECT_DOUBLE_EQ(cosine_sim(x, x), 1.0);
  EXPECT_DOUBLE_EQ(cosine_sim(x, scale(x, -1)), -1.0);
  EXPECT_EQ(cosine_sim(Tensor::vector({1, 0}), Tensor::vector({0, 1})), 0.0);
}

TEST(TensorTest, CosineSimZeroNormIsAnError) {
  EXPECT_THROW(cosine_sim(Tensor({3}), Tensor::vector({1, 2, 3})), DegenerateInputError);
  EXPECT_THROW(cosine_sim(Tensor::vector({1, 2, 3}), Tensor({3})), DegenerateInputError);
}

TEST(TensorTest, Matmul) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  EXPECT_TRUE(matmul(eye, a).bit_equal(a));
  const Tensor r = matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}));
  EXPECT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_EQ(r[0], 11.0);
  EXPECT_THROW(matmul(Tensor({3, 2}), Tensor({3, 2})), ShapeError);
}

TEST(TensorTest, RejectsInconsistentConstruction) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor(Shape{0, 2}), ShapeError);
}

TEST(TensorTest, F32TensorsHoldFloatValues) {
  const Tensor t({1}, {0.1}, DType::f32);
  EXPECT_EQ(t[0], static_cast<double>(0.1f));
}

TEST(TensorPropertyTest, AddCommutativeAndAssociative) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const Shape s = random_shape(rng);
    const Tensor a = random_tensor(rng, s, 1e3), b = random_tensor(rng, s, 1e3), c = random_tensor(rng, s, 1e3);
    const Tensor ab = add(a, b), ba = add(b, a);
    const Tensor l = add(add(a, b), c), r = add(a, add(b, c));
    for (std::size_t i = 0; i < a.numel(); ++i) {
      EXPECT_EQ(ab[i], ba[i]);
      EXPECT_NEAR(l[i], r[i], 1e-12 * std::max(1.0, std::abs(l[i])));
    }
  }
}

TEST(TensorPropertyTest, CosineBoundedAndScaleInvariant) {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const Shape s = random_shape(rng);
    const Tensor a = random_tensor(rng, s, 10), b = random_tensor(rng, s, 10);
    const double c = cosine_sim(a, b);
    EXPECT_LE(std::abs(c), 1.0);
    double k = (2.0 * rng.uniform() - 1.0) * 100.0;
    if (k == 0.0) k = 1.0;
    EXPECT_NEAR(cosine_sim(a, scale(a, k)), k > 0 ? 1.0 : -1.0, 1e-12);
  }
}

TEST(TensorPropertyTest, NormIsAbsolutelyHomogeneous) {
  Rng rng(13);
  for (int trial = 0; trial < 500; ++trial) {
    const Tensor a = random_tensor(rng, random_shape(rng), 10);
    const double c = (2.0 * rng.uniform() - 1.0) * 50.0;
    const double lhs = l2_norm(scale(a, c)), rhs = std::abs(c) * l2_norm(a);
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(rhs, 1e-300));
  }
}

}  // namespace
}  // namespace drift
