method Double(n: nat) returns (d: int)
  ensures d == 2 * n
{
  d := 0;
  var i := 0;
  while i < n
    invariant 0 <= i <= n
    invariant d == 2 * i
  {
    d := d + 2;
    i := i + 1;
  }
}
