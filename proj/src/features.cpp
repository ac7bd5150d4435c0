#include "paramisp/features.hpp"

#include "paramisp/error.hpp"
#include "paramisp/ops.hpp"

namespace paramisp {

namespace {

template <class T>
void check_image(const Tensor<T>& img, const char* op) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    raise(ErrorCode::ShapeMismatch, op, ": expected 3 x H x W, got ", shape_str(img.shape()));
}

template <class T>
Tensor<T> sobel_kernel() {
  static constexpr double kH[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  Tensor<T> k = Tensor<T>::zeros({6, 3, 3, 3});
  auto d = k.data_mut();
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        d[(((2 * c) * 3 + c) * 3 + i) * 3 + j] = static_cast<T>(kH[i][j]);
        d[(((2 * c + 1) * 3 + c) * 3 + i) * 3 + j] = static_cast<T>(kH[j][i]);
      }
  return k;
}

}  // namespace

template <class T>
Tensor<T> sobel_gradient_map(const Tensor<T>& img) {
  check_image(img, "sobel_gradient_map");
  if (img.dim(1) < 3 || img.dim(2) < 3)
    raise(ErrorCode::ShapeMismatch, "sobel_gradient_map: image ", shape_str(img.shape()), " smaller than 3x3");
  static const Tensor<T> kernel = sobel_kernel<T>();
  return conv2d(img, kernel, Tensor<T>(), 1, 1, PadMode::Reflect);
}

template <class T>
Tensor<T> soft_histogram_map(const Tensor<T>& img, int bins) {
  check_image(img, "soft_histogram_map");
  return soft_histogram(img, bins);
}

template <class T>
Tensor<T> overexposure_mask(const Tensor<T>& img, T tau) {
  check_image(img, "overexposure_mask");
  return mul_scalar(relu(add_scalar(img, -tau)), T(10));
}

template <class T>
Tensor<T> assemble_feature_stack(const Tensor<T>& img) {
  check_image(img, "assemble_feature_stack");
  return concat<T>({img, sobel_gradient_map(img), soft_histogram_map(clamp(img, T(0), T(1))), overexposure_mask(img)});
}

#define PARAMISP_INSTANTIATE(T)                                     \
  template Tensor<T> sobel_gradient_map(const Tensor<T>&);          \
  template Tensor<T> soft_histogram_map(const Tensor<T>&, int);     \
  template Tensor<T> overexposure_mask(const Tensor<T>&, T);        \
  template Tensor<T> assemble_feature_stack(const Tensor<T>&);

PARAMISP_INSTANTIATE(float)
PARAMISP_INSTANTIATE(double)

}  // namespace paramisp
