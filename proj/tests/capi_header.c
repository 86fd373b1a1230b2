/* SPDX-License-Identifier: Apache-2.0 */
/* Compiled as C to keep the public header free of C++. */
#include "latentrank/latentrank.h"

int lr_c_header_check(void) {
  lr_store* store = NULL;
  if (lr_store_create(2, 3, &store) != LR_OK) return 1;
  size_t n = lr_store_size(store);
  lr_store_destroy(store);
  return (int)n;
}
