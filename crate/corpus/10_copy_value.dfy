method CopyValue(n: nat) returns (r: int)
  ensures r == n
{
  r := 0;
  var i := 0;
  while i < n
    invariant 0 <= i <= n
    invariant r == i
  {
    i := i + 1;
    r := r + 1;
  }
}
