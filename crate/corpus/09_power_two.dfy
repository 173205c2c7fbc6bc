method PowerTwo(e: nat) returns (p: int)
  ensures p >= 1
{
  p := 1;
  var i := 0;
  while i < e
    invariant 0 <= i <= e
    invariant p >= 1
  {
    p := p * 2;
    i := i + 1;
  }
}
