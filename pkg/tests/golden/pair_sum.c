int ipow(int base, int exp) {
  int r = 1;
  while (exp > 0) { r = r * base; exp = exp - 1; }
  return r;
}

void pairSumKernel(float* restrict output, const float* restrict xs) {
  float buffer1[8]; float buffer2[8];
  const float* in_ptr = xs; float* out_ptr = buffer1;
  unsigned char flag = 1;
  for (int i = 0; i < 3; i += 1) {
    for (int i1 = 0; i1 < ipow(2, 2 - i); i1 += 1) {
      float accum;
      accum = 0.0f;
      for (int i2 = 0; i2 < 2; i2 += 1) {
        accum = (accum + in_ptr[2 * i1 + i2]);
      }
      out_ptr[i1] = accum;
    }
    if (i < 1) {
      in_ptr = flag ? buffer1 : buffer2;
      out_ptr = flag ? buffer2 : buffer1;
      flag = flag ^ 1;
    } else {
      in_ptr = flag ? buffer1 : buffer2;
      out_ptr = output;
    }
  }
}
