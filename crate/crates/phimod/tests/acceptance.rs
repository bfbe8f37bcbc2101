// filled in as criteria land
