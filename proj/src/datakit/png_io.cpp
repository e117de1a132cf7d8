#include "vfe/datakit/png_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "vfe/errors.hpp"

namespace vfe::datakit {

ImageTensor read_png_rgb(const std::filesystem::path& path) {
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (raw.empty()) throw IoError("cannot decode image " + path.string());
  if (raw.depth() != CV_8U) throw IoError("expected an 8-bit image: " + path.string());
  ImageTensor out(3, raw.rows, raw.cols);
  for (int y = 0; y < raw.rows; ++y) {
    const auto* row = raw.ptr<cv::Vec3b>(y);
    for (int x = 0; x < raw.cols; ++x) {
      // OpenCV stores BGR.
      out.at(0, y, x) = from_u8(row[x][2]);
      out.at(1, y, x) = from_u8(row[x][1]);
      out.at(2, y, x) = from_u8(row[x][0]);
    }
  }
  return out;
}

BinaryMask read_png_mask(const std::filesystem::path& path) {
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw IoError("cannot decode mask " + path.string());
  BinaryMask mask(raw.rows, raw.cols);
  for (int y = 0; y < raw.rows; ++y) {
    const auto* row = raw.ptr<std::uint8_t>(y);
    for (int x = 0; x < raw.cols; ++x) mask.set(y, x, row[x] != 0);
  }
  return mask;
}

void write_png_rgb(const std::filesystem::path& path, const ImageTensor& image) {
  if (image.channels != 3) throw InvalidInput("write_png_rgb needs 3 channels");
  cv::Mat out(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      row[x][2] = to_u8(image.at(0, y, x));
      row[x][1] = to_u8(image.at(1, y, x));
      row[x][0] = to_u8(image.at(2, y, x));
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), out);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  cv::Mat out(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), out);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace vfe::datakit
