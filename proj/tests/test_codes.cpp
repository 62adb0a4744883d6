#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "abc/codes.hpp"

using abc::PackedCodeMatrix;

TEST(PackedCodes, BitLayoutLsbFirst) {
    PackedCodeMatrix m(2, 12);
    m.set_bit(0, 0, true);
    m.set_bit(0, 9, true);
    EXPECT_EQ(m.row(0)[0], 0x01u);
    EXPECT_EQ(m.row(0)[1], 0x02u);  // bit 9 -> byte 1, position 1
    EXPECT_TRUE(m.bit(0, 0));
    EXPECT_TRUE(m.bit(0, 9));
    EXPECT_FALSE(m.bit(0, 1));
    m.set_bit(0, 9, false);
    EXPECT_FALSE(m.bit(0, 9));
}

TEST(PackedCodes, EmptyInputRejected) {
    EXPECT_THROW(PackedCodeMatrix(0, 8), abc::DataError);
    EXPECT_THROW(PackedCodeMatrix(4, 0), abc::DataError);
}

TEST(PackedCodes, PaddingValidation) {
    PackedCodeMatrix m(1, 12);
    EXPECT_NO_THROW(m.validate_padding());
    m.row(0)[1] = 0xF0u;  // set padding bits directly
    EXPECT_THROW(m.validate_padding(), abc::DataError);
    PackedCodeMatrix full(1, 16);
    full.row(0)[1] = 0xFFu;  // no padding for multiples of 8
    EXPECT_NO_THROW(full.validate_padding());
}

TEST(PackedCodes, RoundTripPreservesEverything) {
    std::mt19937 rng(62);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 40);
        const int k = 1 + static_cast<int>(rng() % 70);
        PackedCodeMatrix m(n, k);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < k; ++j) {
                if (rng() & 1) m.set_bit(i, j, true);
            }
            std::vector<std::uint16_t> labels;
            const int cnt = static_cast<int>(rng() % 4);
            for (int l = 0; l < cnt; ++l) labels.push_back(static_cast<std::uint16_t>(rng() % 1000));
            m.set_labels(i, labels);
        }
        std::ostringstream os(std::ios::binary);
        m.write(os);
        std::istringstream is(os.str(), std::ios::binary);
        PackedCodeMatrix back = PackedCodeMatrix::read(is);
        EXPECT_TRUE(m.same_codes(back));
        // Padding hygiene survives the trip.
        EXPECT_NO_THROW(back.validate_padding());
        // Re-serialization is byte-identical.
        std::ostringstream os2(std::ios::binary);
        back.write(os2);
        EXPECT_EQ(os.str(), os2.str());
    }
}

TEST(PackedCodes, TruncatedStreamsFail) {
    PackedCodeMatrix m(3, 24);
    m.set_labels(1, {7, 9});
    std::ostringstream os(std::ios::binary);
    m.write(os);
    const std::string full = os.str();
    for (const std::size_t keep : {std::size_t(2), std::size_t(8), full.size() - 1}) {
        std::istringstream is(full.substr(0, keep), std::ios::binary);
        EXPECT_THROW(PackedCodeMatrix::read(is), abc::FormatError) << keep;
    }
    std::istringstream bad_magic("XXXX" + full.substr(4), std::ios::binary);
    EXPECT_THROW(PackedCodeMatrix::read(bad_magic), abc::FormatError);
}

TEST(PackedCodes, ReadRejectsDirtyPadding) {
    PackedCodeMatrix m(1, 4);
    m.set_bit(0, 0, true);
    std::ostringstream os(std::ios::binary);
    m.write(os);
    std::string bytes = os.str();
    bytes[12] = static_cast<char>(0xFF);  // the single code byte, after magic+N+k
    std::istringstream is(bytes, std::ios::binary);
    EXPECT_THROW(PackedCodeMatrix::read(is), abc::DataError);
}
