# output, intermediate and input guidance
