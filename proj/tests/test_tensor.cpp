#include <gtest/gtest.h>

#include "abc/tensor.hpp"

using abc::DimensionError;
using abc::Tensor;

TEST(Tensor, ConstructionAndAccess) {
    Tensor<float> t({2, 3});
    EXPECT_EQ(t.size(), 6);
    EXPECT_EQ(t.rank(), 2);
    t(1, 2) = 5.0f;
    EXPECT_FLOAT_EQ(t[5], 5.0f);

    Tensor<float> m({2, 2}, {1, 2, 3, 4});
    EXPECT_FLOAT_EQ(m(0, 1), 2.0f);
    EXPECT_FLOAT_EQ(m(1, 0), 3.0f);
}

TEST(Tensor, ValueCountMustMatchShape) {
    EXPECT_THROW(Tensor<float>({2, 2}, {1, 2, 3}), DimensionError);
    EXPECT_THROW(Tensor<float>({0, 2}), DimensionError);
    EXPECT_THROW(Tensor<float>({2, -1}), DimensionError);
}

TEST(Tensor, Rank4Indexing) {
    Tensor<float> t({2, 3, 4, 5});
    t(1, 2, 3, 4) = 9.0f;
    EXPECT_FLOAT_EQ(t[t.size() - 1], 9.0f);
    t(0, 0, 0, 1) = 2.0f;
    EXPECT_FLOAT_EQ(t[1], 2.0f);
}

TEST(Tensor, Reshape) {
    Tensor<float> t({2, 6});
    Tensor<float> r = t.reshaped({3, 4});
    EXPECT_EQ(r.dim(0), 3);
    EXPECT_THROW(t.reshaped({5, 2}), DimensionError);
}

TEST(Tensor, FiniteCheck) {
    Tensor<double> t({3});
    EXPECT_TRUE(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(t.all_finite());
    t[1] = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, ParameterGradAccumulation) {
    abc::Parameter<float> p("w", Tensor<float>({2}));
    EXPECT_TRUE(p.grad.same_shape(p.value));
    p.grad[0] = 3.0f;
    p.zero_grad();
    EXPECT_FLOAT_EQ(p.grad[0], 0.0f);
}
